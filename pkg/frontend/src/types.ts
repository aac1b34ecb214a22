/** Wire documents served by the gateway. Field names match the JSON exactly. */

export interface PlateDoc {
  hypervisor_id: string;
  width_x: number;
  depth_z: number;
  energy_shade: number | null;
  is_down: boolean;
  is_blinking: boolean;
  overcommitted: boolean;
}

export interface BoxDoc {
  instance_id: string;
  hypervisor_id: string;
  width_x: number;
  depth_z: number;
  height_y: number;
  pos_x: number;
  pos_z: number;
  colour_hue: number;
  translucent: boolean;
  is_blinking: boolean;
}

export interface SceneDoc {
  at_seq: number;
  stale: boolean;
  plates: PlateDoc[];
  boxes: BoxDoc[];
  unplaced: string[];
}

export interface EventDoc {
  kind: string;
  at_seq?: number;
  subject?: string;
  before?: unknown;
  after?: unknown;
  op_id?: string;
  op_kind?: string;
  target?: string;
  outcome?: string;
  error?: string;
  message?: string;
}

export type CommandKind = "start" | "stop" | "migrate" | "host-on" | "host-off";

export interface CommandBody {
  kind: CommandKind;
  subject: string;
  target?: string;
}

export interface OpDoc {
  op_id: string;
  op_kind: string;
  subject: string;
  target?: string;
}

export interface ErrorDoc {
  error: { reason: string; message: string };
}

export function isSceneDoc(doc: unknown): doc is SceneDoc {
  const d = doc as SceneDoc;
  return (
    typeof d === "object" &&
    d !== null &&
    typeof d.at_seq === "number" &&
    Array.isArray(d.plates) &&
    Array.isArray(d.boxes) &&
    Array.isArray(d.unplaced) &&
    d.plates.every((p) => typeof p.hypervisor_id === "string") &&
    d.boxes.every((b) => typeof b.instance_id === "string" && typeof b.hypervisor_id === "string")
  );
}
