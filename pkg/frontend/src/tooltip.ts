/** Hover tooltip content.
 *
 * The scene document is geometry: footprints encode VCPUs (width by
 * depth), heights encode RAM, hue encodes the owning project. Live
 * figures that never appear in the snapshot (power status strings,
 * wattage readings) are tracked from the event stream; until a reading
 * arrives the tooltip falls back to what geometry implies, and watts
 * shows "n/a" when no meter has reported.
 */

import type { BoxDoc, EventDoc, PlateDoc } from "./types";

export const HOVER_DELAY_MS = 150;

const RAM_MB_PER_UNIT_VOLUME = 512;

/** Rolling per-entity facts learned from the event stream. */
export class LiveDetails {
  private statusByInstance = new Map<string, string>();
  private wattsByHost = new Map<string, number | null>();

  ingest(doc: EventDoc): void {
    const subject = doc.subject;
    if (typeof subject !== "string") return;
    switch (doc.kind) {
      case "power-changed":
        if (typeof doc.after === "string") this.statusByInstance.set(subject, doc.after);
        break;
      case "instance-created": {
        const after = doc.after as { status?: unknown } | null | undefined;
        if (after && typeof after.status === "string") this.statusByInstance.set(subject, after.status);
        break;
      }
      case "instance-deleted":
        this.statusByInstance.delete(subject);
        break;
      case "metering-changed":
        this.wattsByHost.set(subject, typeof doc.after === "number" ? doc.after : null);
        break;
      default:
        break;
    }
  }

  status(instanceId: string): string | undefined {
    return this.statusByInstance.get(instanceId);
  }

  watts(hostId: string): number | null | undefined {
    return this.wattsByHost.get(hostId);
  }
}

export interface TooltipContent {
  title: string;
  lines: string[];
}

function formatMb(mb: number): string {
  return Number.isInteger(mb) ? `${mb} MB` : `${mb.toFixed(1)} MB`;
}

export function tooltipForBox(doc: BoxDoc, live: LiveDetails): TooltipContent {
  const vcpus = doc.width_x * doc.depth_z;
  const ramMb = doc.width_x * doc.depth_z * doc.height_y * RAM_MB_PER_UNIT_VOLUME;
  const status = live.status(doc.instance_id) ?? (doc.translucent ? "Shutoff" : "Active");
  return {
    title: doc.instance_id,
    lines: [
      `flavour: ${vcpus} VCPU / ${formatMb(ramMb)}`,
      `project: hue ${doc.colour_hue.toFixed(1)}°`,
      `status: ${status}`,
    ],
  };
}

export function tooltipForPlate(doc: PlateDoc, live: LiveDetails): TooltipContent {
  const vcpus = doc.width_x * doc.depth_z;
  const watts = live.watts(doc.hypervisor_id);
  const wattsText = typeof watts === "number" ? `${watts.toFixed(1)} W` : "n/a";
  const lines = [`VCPUs: ${vcpus}`, `power: ${wattsText}`];
  if (doc.is_down) lines.push("state: down");
  if (doc.overcommitted) lines.push("overcommitted");
  return { title: doc.hypervisor_id, lines };
}
