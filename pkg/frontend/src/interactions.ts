/** Pointer gestures as a pure state machine.
 *
 * Pointer samples go in, UI actions come out; nothing here touches the
 * DOM or three.js, so the gesture rules are testable headless. The
 * browser layer feeds picked targets from its raycaster and executes
 * the returned actions (POST a command, show a tooltip, move a mesh).
 *
 * Rules enforced here:
 *   - long right-press (>= 600 ms, press and release on the same
 *     entity) toggles power; the direction comes from current status.
 *     A short right-click does nothing. Entities already mid-operation
 *     (blinking) swallow the gesture locally instead of racing the
 *     server.
 *   - left-drag from a box to a different plate requests a migration;
 *     releasing over the source plate, empty space, or anything that is
 *     not a plate cancels quietly.
 *   - a tooltip appears after the pointer dwells >= 150 ms on one
 *     entity, and hides on any movement off it, button press, or drag.
 */

import { HOVER_DELAY_MS } from "./tooltip";
import type { BoxDoc, CommandBody, PlateDoc } from "./types";

export const LONG_PRESS_MS = 600;

export interface Pick {
  kind: "plate" | "box";
  id: string;
}

export type PickTarget = Pick | null;

export interface PointerSample {
  type: "down" | "move" | "up" | "leave";
  button?: 0 | 2; // 0 left, 2 right; meaningful for down/up
  timeMs: number;
  target: PickTarget;
}

export type UiAction =
  | { action: "command"; body: CommandBody }
  | { action: "tooltip-show"; target: Pick }
  | { action: "tooltip-hide" }
  | { action: "drag-begin"; instanceId: string }
  | { action: "drag-end"; instanceId: string; migrated: boolean };

/** What the controller needs to know about the scene it acts on. */
export interface SceneFacts {
  box(id: string): BoxDoc | undefined;
  plate(id: string): PlateDoc | undefined;
  /** Live power status when the event stream has reported one. */
  liveStatus?(instanceId: string): string | undefined;
}

function samePick(a: PickTarget, b: PickTarget): boolean {
  if (a === null || b === null) return a === b;
  return a.kind === b.kind && a.id === b.id;
}

export class InteractionController {
  private hoverTarget: PickTarget = null;
  private hoverSinceMs = 0;
  private tooltipShown = false;
  private rightPress: { target: Pick; downMs: number } | null = null;
  private drag: { instanceId: string; downMs: number; moved: boolean } | null = null;

  constructor(private facts: SceneFacts) {}

  get dragging(): boolean {
    return this.drag !== null && this.drag.moved;
  }

  /** Feed one pointer sample; returns the actions it triggers. */
  sample(s: PointerSample): UiAction[] {
    switch (s.type) {
      case "down":
        return this.onDown(s);
      case "move":
        return this.onMove(s);
      case "up":
        return this.onUp(s);
      case "leave":
        return this.reset();
    }
  }

  /** Fire time-based actions (tooltip dwell). Call once per frame. */
  advance(timeMs: number): UiAction[] {
    if (
      this.hoverTarget !== null &&
      !this.tooltipShown &&
      this.rightPress === null &&
      this.drag === null &&
      timeMs - this.hoverSinceMs >= HOVER_DELAY_MS
    ) {
      this.tooltipShown = true;
      return [{ action: "tooltip-show", target: this.hoverTarget }];
    }
    return [];
  }

  private onDown(s: PointerSample): UiAction[] {
    const actions = this.hideTooltip();
    this.hoverTarget = null;
    if (s.button === 2 && s.target !== null) {
      this.rightPress = { target: s.target, downMs: s.timeMs };
    } else if (s.button === 0 && s.target?.kind === "box") {
      this.drag = { instanceId: s.target.id, downMs: s.timeMs, moved: false };
    }
    return actions;
  }

  private onMove(s: PointerSample): UiAction[] {
    const actions: UiAction[] = [];
    if (this.drag !== null && !this.drag.moved) {
      this.drag.moved = true;
      actions.push({ action: "drag-begin", instanceId: this.drag.instanceId });
    }
    if (this.rightPress !== null && !samePick(this.rightPress.target, s.target)) {
      this.rightPress = null; // slid off the pressed entity
    }
    if (this.rightPress === null && this.drag === null) {
      if (!samePick(this.hoverTarget, s.target)) {
        actions.push(...this.hideTooltip());
        this.hoverTarget = s.target;
        this.hoverSinceMs = s.timeMs;
      }
    }
    return actions;
  }

  private onUp(s: PointerSample): UiAction[] {
    if (s.button === 2) return this.onRightUp(s);
    if (s.button === 0 && this.drag !== null) return this.onDrop(s);
    return [];
  }

  private onRightUp(s: PointerSample): UiAction[] {
    const press = this.rightPress;
    this.rightPress = null;
    if (press === null) return [];
    if (s.timeMs - press.downMs < LONG_PRESS_MS) return [];
    if (!samePick(press.target, s.target)) return [];
    const body = this.powerToggleBody(press.target);
    return body === null ? [] : [{ action: "command", body }];
  }

  private powerToggleBody(target: Pick): CommandBody | null {
    if (target.kind === "box") {
      const doc = this.facts.box(target.id);
      if (doc === undefined || doc.is_blinking) return null;
      const status = this.facts.liveStatus?.(target.id) ?? (doc.translucent ? "Shutoff" : "Active");
      return { kind: status === "Shutoff" ? "start" : "stop", subject: target.id };
    }
    const doc = this.facts.plate(target.id);
    if (doc === undefined || doc.is_blinking) return null;
    return { kind: doc.is_down ? "host-on" : "host-off", subject: target.id };
  }

  private onDrop(s: PointerSample): UiAction[] {
    const drag = this.drag;
    this.drag = null;
    if (drag === null || !drag.moved) return [];
    const plateId = this.dropPlate(s.target);
    const source = this.facts.box(drag.instanceId)?.hypervisor_id;
    if (plateId === null || plateId === source) {
      return [{ action: "drag-end", instanceId: drag.instanceId, migrated: false }];
    }
    return [
      { action: "command", body: { kind: "migrate", subject: drag.instanceId, target: plateId } },
      { action: "drag-end", instanceId: drag.instanceId, migrated: true },
    ];
  }

  private dropPlate(target: PickTarget): string | null {
    if (target === null) return null;
    if (target.kind === "plate") return target.id;
    return this.facts.box(target.id)?.hypervisor_id ?? null;
  }

  private hideTooltip(): UiAction[] {
    if (!this.tooltipShown) return [];
    this.tooltipShown = false;
    return [{ action: "tooltip-hide" }];
  }

  private reset(): UiAction[] {
    const actions = this.hideTooltip();
    this.hoverTarget = null;
    this.rightPress = null;
    if (this.drag?.moved) {
      actions.push({ action: "drag-end", instanceId: this.drag.instanceId, migrated: false });
    }
    this.drag = null;
    return actions;
  }
}
