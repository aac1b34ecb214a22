/** Colour mapping rules for the scene: project hues, energy tint, status looks. */

import * as THREE from "three";

/** Fully powered boxes; translucent ones drop to this opacity. */
export const TRANSLUCENT_OPACITY = 0.35;
export const OPAQUE_OPACITY = 1.0;

/** Plates with no power reading stay neutral. */
export const PLATE_NEUTRAL = new THREE.Color(0x8d9199);
/** Energy tint runs light red (idle) to dark red (hot). */
export const PLATE_COOL = new THREE.Color(0xffd6d6);
export const PLATE_HOT = new THREE.Color(0x590000);
/** Down hosts are drawn as grey wireframes. */
export const PLATE_DOWN = new THREE.Color(0x777777);

export function boxColour(hueDegrees: number): THREE.Color {
  return new THREE.Color().setHSL(hueDegrees / 360, 0.62, 0.52);
}

export function plateColour(energyShade: number | null, isDown: boolean): THREE.Color {
  if (isDown) return PLATE_DOWN.clone();
  if (energyShade === null) return PLATE_NEUTRAL.clone();
  return PLATE_COOL.clone().lerp(PLATE_HOT, energyShade);
}
