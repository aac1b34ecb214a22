/** Canned scene documents for headless tests.
 *
 * The main fixture mirrors the service's two-host starting inventory:
 * two 32-VCPU plates, three boxes, one of them shut off. Returned as a
 * fresh deep copy so tests can mutate freely.
 */

import type { SceneDoc } from "../src/types";

const F1: SceneDoc = {
  at_seq: 1,
  stale: false,
  plates: [
    {
      hypervisor_id: "hv-01",
      width_x: 8,
      depth_z: 4,
      energy_shade: 0.2,
      is_down: false,
      is_blinking: false,
      overcommitted: false,
    },
    {
      hypervisor_id: "hv-02",
      width_x: 8,
      depth_z: 4,
      energy_shade: 0.7429,
      is_down: false,
      is_blinking: false,
      overcommitted: false,
    },
  ],
  boxes: [
    {
      instance_id: "vm-0001",
      hypervisor_id: "hv-01",
      width_x: 2,
      depth_z: 2,
      height_y: 4.0,
      pos_x: 0,
      pos_z: 0,
      colour_hue: 0.0,
      translucent: false,
      is_blinking: false,
    },
    {
      instance_id: "vm-0002",
      hypervisor_id: "hv-01",
      width_x: 2,
      depth_z: 1,
      height_y: 4.0,
      pos_x: 2,
      pos_z: 0,
      colour_hue: 0.0,
      translucent: true,
      is_blinking: false,
    },
    {
      instance_id: "vm-0003",
      hypervisor_id: "hv-02",
      width_x: 1,
      depth_z: 1,
      height_y: 1.0,
      pos_x: 0,
      pos_z: 0,
      colour_hue: 137.508,
      translucent: false,
      is_blinking: false,
    },
  ],
  unplaced: [],
};

export function sceneFixture(): SceneDoc {
  return structuredClone(F1);
}
