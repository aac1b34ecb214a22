/** Opacity pulse applied to entities with a pending operation. */

import type * as THREE from "three";

import type { EntityUserData } from "./scene";

export const BLINK_HZ = 2;

/** Multiplier in [0.3, 1.0] following a 2 Hz cosine, so a blinking
 * entity dips towards transparent and back twice per second. */
export function blinkOpacityScale(timeMs: number): number {
  const phase = (timeMs / 1000) * BLINK_HZ * 2 * Math.PI;
  return 0.65 + 0.35 * Math.cos(phase);
}

/** Set every mesh's opacity from its resting value, pulsing the ones
 * flagged as blinking. Cheap enough to run per frame. */
export function applyBlink(meshes: THREE.Mesh[], timeMs: number): void {
  const scale = blinkOpacityScale(timeMs);
  for (const mesh of meshes) {
    const data = mesh.userData as EntityUserData;
    const material = mesh.material as THREE.MeshLambertMaterial;
    material.opacity = data.blinking ? data.baseOpacity * scale : data.baseOpacity;
  }
}
