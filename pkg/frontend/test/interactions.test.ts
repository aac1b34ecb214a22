import { describe, expect, it } from "vitest";

import { InteractionController, LONG_PRESS_MS } from "../src/interactions";
import type { PickTarget, SceneFacts, UiAction } from "../src/interactions";
import { HOVER_DELAY_MS, LiveDetails, tooltipForBox, tooltipForPlate } from "../src/tooltip";
import type { SceneDoc } from "../src/types";
import { sceneFixture } from "./fixtures";

function factsFor(doc: SceneDoc, live?: LiveDetails): SceneFacts {
  return {
    box: (id) => doc.boxes.find((b) => b.instance_id === id),
    plate: (id) => doc.plates.find((p) => p.hypervisor_id === id),
    liveStatus: live ? (id) => live.status(id) : undefined,
  };
}

function press(
  controller: InteractionController,
  target: PickTarget,
  holdMs: number,
  upTarget: PickTarget = target,
): UiAction[] {
  const out = controller.sample({ type: "down", button: 2, timeMs: 1000, target });
  out.push(...controller.sample({ type: "up", button: 2, timeMs: 1000 + holdMs, target: upTarget }));
  return out;
}

describe("long right-press power toggle", () => {
  it("sends stop for a running box held past the threshold", () => {
    const controller = new InteractionController(factsFor(sceneFixture()));
    const actions = press(controller, { kind: "box", id: "vm-0001" }, LONG_PRESS_MS);
    expect(actions).toEqual([
      { action: "command", body: { kind: "stop", subject: "vm-0001" } },
    ]);
  });

  it("sends start for a shut-off box", () => {
    const controller = new InteractionController(factsFor(sceneFixture()));
    const actions = press(controller, { kind: "box", id: "vm-0002" }, 800);
    expect(actions).toEqual([
      { action: "command", body: { kind: "start", subject: "vm-0002" } },
    ]);
  });

  it("prefers the live status over the snapshot's translucency", () => {
    const live = new LiveDetails();
    live.ingest({ kind: "power-changed", subject: "vm-0001", before: "Active", after: "Shutoff", at_seq: 5 });
    const controller = new InteractionController(factsFor(sceneFixture(), live));
    const actions = press(controller, { kind: "box", id: "vm-0001" }, LONG_PRESS_MS);
    expect(actions[0]).toEqual({ action: "command", body: { kind: "start", subject: "vm-0001" } });
  });

  it("does nothing when released just under the threshold", () => {
    const controller = new InteractionController(factsFor(sceneFixture()));
    expect(press(controller, { kind: "box", id: "vm-0001" }, LONG_PRESS_MS - 1)).toEqual([]);
  });

  it("does nothing on a short click", () => {
    const controller = new InteractionController(factsFor(sceneFixture()));
    expect(press(controller, { kind: "box", id: "vm-0001" }, 80)).toEqual([]);
  });

  it("cancels when the pointer slides off the entity before release", () => {
    const controller = new InteractionController(factsFor(sceneFixture()));
    const actions = controller.sample({ type: "down", button: 2, timeMs: 0, target: { kind: "box", id: "vm-0001" } });
    actions.push(...controller.sample({ type: "move", timeMs: 300, target: null }));
    actions.push(...controller.sample({ type: "up", button: 2, timeMs: 900, target: { kind: "box", id: "vm-0001" } }));
    expect(actions).toEqual([]);
  });

  it("swallows the gesture locally while the box is mid-operation", () => {
    const doc = sceneFixture();
    doc.boxes[0].is_blinking = true;
    const controller = new InteractionController(factsFor(doc));
    expect(press(controller, { kind: "box", id: "vm-0001" }, 900)).toEqual([]);
  });

  it("toggles a plate off when the host is up", () => {
    const controller = new InteractionController(factsFor(sceneFixture()));
    const actions = press(controller, { kind: "plate", id: "hv-02" }, LONG_PRESS_MS);
    expect(actions).toEqual([
      { action: "command", body: { kind: "host-off", subject: "hv-02" } },
    ]);
  });

  it("toggles a plate on when the host is down", () => {
    const doc = sceneFixture();
    doc.plates[1].is_down = true;
    const controller = new InteractionController(factsFor(doc));
    const actions = press(controller, { kind: "plate", id: "hv-02" }, LONG_PRESS_MS);
    expect(actions).toEqual([
      { action: "command", body: { kind: "host-on", subject: "hv-02" } },
    ]);
  });

  it("swallows the gesture on a plate with an operation in flight", () => {
    const doc = sceneFixture();
    doc.plates[0].is_blinking = true;
    const controller = new InteractionController(factsFor(doc));
    expect(press(controller, { kind: "plate", id: "hv-01" }, 900)).toEqual([]);
  });
});

describe("drag to migrate", () => {
  function drag(
    controller: InteractionController,
    boxId: string,
    dropTarget: PickTarget,
  ): UiAction[] {
    const out = controller.sample({ type: "down", button: 0, timeMs: 0, target: { kind: "box", id: boxId } });
    out.push(...controller.sample({ type: "move", timeMs: 40, target: { kind: "box", id: boxId } }));
    out.push(...controller.sample({ type: "move", timeMs: 300, target: dropTarget }));
    out.push(...controller.sample({ type: "up", button: 0, timeMs: 350, target: dropTarget }));
    return out;
  }

  it("posts a migrate when dropped on a different plate", () => {
    const controller = new InteractionController(factsFor(sceneFixture()));
    const actions = drag(controller, "vm-0001", { kind: "plate", id: "hv-02" });
    expect(actions).toEqual([
      { action: "drag-begin", instanceId: "vm-0001" },
      { action: "command", body: { kind: "migrate", subject: "vm-0001", target: "hv-02" } },
      { action: "drag-end", instanceId: "vm-0001", migrated: true },
    ]);
  });

  it("cancels quietly when dropped back on the source plate", () => {
    const controller = new InteractionController(factsFor(sceneFixture()));
    const actions = drag(controller, "vm-0001", { kind: "plate", id: "hv-01" });
    expect(actions).toEqual([
      { action: "drag-begin", instanceId: "vm-0001" },
      { action: "drag-end", instanceId: "vm-0001", migrated: false },
    ]);
  });

  it("cancels quietly when dropped on empty space", () => {
    const controller = new InteractionController(factsFor(sceneFixture()));
    const actions = drag(controller, "vm-0001", null);
    expect(actions).toEqual([
      { action: "drag-begin", instanceId: "vm-0001" },
      { action: "drag-end", instanceId: "vm-0001", migrated: false },
    ]);
  });

  it("resolves a drop on another box to that box's plate", () => {
    const controller = new InteractionController(factsFor(sceneFixture()));
    const actions = drag(controller, "vm-0001", { kind: "box", id: "vm-0003" });
    expect(actions[1]).toEqual({
      action: "command",
      body: { kind: "migrate", subject: "vm-0001", target: "hv-02" },
    });
  });

  it("treats a left click without movement as nothing at all", () => {
    const controller = new InteractionController(factsFor(sceneFixture()));
    const out = controller.sample({ type: "down", button: 0, timeMs: 0, target: { kind: "box", id: "vm-0001" } });
    out.push(...controller.sample({ type: "up", button: 0, timeMs: 90, target: { kind: "box", id: "vm-0001" } }));
    expect(out).toEqual([]);
  });

  it("snaps the box home when the pointer leaves mid-drag", () => {
    const controller = new InteractionController(factsFor(sceneFixture()));
    const out = controller.sample({ type: "down", button: 0, timeMs: 0, target: { kind: "box", id: "vm-0001" } });
    out.push(...controller.sample({ type: "move", timeMs: 50, target: null }));
    out.push(...controller.sample({ type: "leave", timeMs: 80, target: null }));
    expect(out).toEqual([
      { action: "drag-begin", instanceId: "vm-0001" },
      { action: "drag-end", instanceId: "vm-0001", migrated: false },
    ]);
  });
});

describe("hover tooltips", () => {
  it("shows a tooltip after the pointer dwells on a box", () => {
    const controller = new InteractionController(factsFor(sceneFixture()));
    controller.sample({ type: "move", timeMs: 0, target: { kind: "box", id: "vm-0001" } });
    expect(controller.advance(HOVER_DELAY_MS - 1)).toEqual([]);
    expect(controller.advance(HOVER_DELAY_MS)).toEqual([
      { action: "tooltip-show", target: { kind: "box", id: "vm-0001" } },
    ]);
    expect(controller.advance(HOVER_DELAY_MS + 50)).toEqual([]); // shown once
  });

  it("hides the tooltip when the pointer moves to empty space", () => {
    const controller = new InteractionController(factsFor(sceneFixture()));
    controller.sample({ type: "move", timeMs: 0, target: { kind: "plate", id: "hv-01" } });
    controller.advance(200);
    const actions = controller.sample({ type: "move", timeMs: 250, target: null });
    expect(actions).toEqual([{ action: "tooltip-hide" }]);
    expect(controller.advance(1000)).toEqual([]); // nothing under the pointer
  });

  it("restarts the dwell when moving between entities", () => {
    const controller = new InteractionController(factsFor(sceneFixture()));
    controller.sample({ type: "move", timeMs: 0, target: { kind: "box", id: "vm-0001" } });
    controller.sample({ type: "move", timeMs: 100, target: { kind: "box", id: "vm-0002" } });
    expect(controller.advance(200)).toEqual([]); // only 100 ms on the new box
    expect(controller.advance(250)).toEqual([
      { action: "tooltip-show", target: { kind: "box", id: "vm-0002" } },
    ]);
  });

  it("suppresses tooltips while dragging", () => {
    const controller = new InteractionController(factsFor(sceneFixture()));
    controller.sample({ type: "down", button: 0, timeMs: 0, target: { kind: "box", id: "vm-0001" } });
    controller.sample({ type: "move", timeMs: 10, target: { kind: "plate", id: "hv-02" } });
    expect(controller.advance(500)).toEqual([]);
  });
});

describe("tooltip content", () => {
  it("describes a box by name, flavour footprint, project hue, and status", () => {
    const doc = sceneFixture();
    const tip = tooltipForBox(doc.boxes[0], new LiveDetails());
    expect(tip.title).toBe("vm-0001");
    expect(tip.lines).toContain("flavour: 4 VCPU / 8192 MB");
    expect(tip.lines).toContain("status: Active");
    expect(tip.lines.some((l) => l.startsWith("project: hue 0.0"))).toBe(true);
  });

  it("reads a shut-off box's status from its translucency", () => {
    const doc = sceneFixture();
    const tip = tooltipForBox(doc.boxes[1], new LiveDetails());
    expect(tip.lines).toContain("status: Shutoff");
  });

  it("upgrades the status once the event stream reports one", () => {
    const live = new LiveDetails();
    live.ingest({ kind: "power-changed", subject: "vm-0001", before: "Active", after: "Error", at_seq: 9 });
    const tip = tooltipForBox(sceneFixture().boxes[0], live);
    expect(tip.lines).toContain("status: Error");
  });

  it("describes a plate with hostname, VCPUs, and wattage", () => {
    const live = new LiveDetails();
    live.ingest({ kind: "metering-changed", subject: "hv-01", before: 100.0, after: 210.5, at_seq: 3 });
    const tip = tooltipForPlate(sceneFixture().plates[0], live);
    expect(tip.title).toBe("hv-01");
    expect(tip.lines).toContain("VCPUs: 32");
    expect(tip.lines).toContain("power: 210.5 W");
  });

  it("shows n/a wattage when no meter has reported", () => {
    const tip = tooltipForPlate(sceneFixture().plates[1], new LiveDetails());
    expect(tip.lines).toContain("power: n/a");
  });

  it("shows n/a wattage when metering goes away", () => {
    const live = new LiveDetails();
    live.ingest({ kind: "metering-changed", subject: "hv-01", before: 210.5, after: null, at_seq: 4 });
    const tip = tooltipForPlate(sceneFixture().plates[0], live);
    expect(tip.lines).toContain("power: n/a");
  });

  it("marks a down host", () => {
    const doc = sceneFixture();
    doc.plates[0].is_down = true;
    const tip = tooltipForPlate(doc.plates[0], new LiveDetails());
    expect(tip.lines).toContain("state: down");
  });
});
