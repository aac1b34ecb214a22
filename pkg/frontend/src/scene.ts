/** Builds and maintains the three.js graph for a scene document.
 *
 * One group per plate (named "plate:<id>"), positioned along x with a
 * fixed gap; each box is a mesh child of its plate's group (named
 * "box:<id>") in plate-local grid coordinates. Everything a pointer can
 * interact with carries userData {kind, id}, and materials record their
 * resting opacity so the blink pass can pulse and restore them.
 */

import * as THREE from "three";

import { boxColour, plateColour, OPAQUE_OPACITY, TRANSLUCENT_OPACITY } from "./colours";
import type { BoxDoc, PlateDoc, SceneDoc } from "./types";

const PLATE_THICKNESS = 0.2;
const PLATE_GAP = 2;
const GRID_LIFT = 0.015; // keep grid lines clear of the plate surface

export interface EntityUserData {
  kind: "plate" | "box";
  id: string;
  doc: PlateDoc | BoxDoc;
  baseOpacity: number;
  blinking: boolean;
}

function gridLines(width: number, depth: number): THREE.LineSegments {
  const points: number[] = [];
  for (let x = 0; x <= width; x++) points.push(x, GRID_LIFT, 0, x, GRID_LIFT, depth);
  for (let z = 0; z <= depth; z++) points.push(0, GRID_LIFT, z, width, GRID_LIFT, z);
  const geometry = new THREE.BufferGeometry();
  geometry.setAttribute("position", new THREE.Float32BufferAttribute(points, 3));
  const material = new THREE.LineBasicMaterial({ color: 0x30343b, transparent: true, opacity: 0.55 });
  const lines = new THREE.LineSegments(geometry, material);
  lines.name = "grid";
  return lines;
}

function plateMesh(doc: PlateDoc): THREE.Mesh {
  const geometry = new THREE.BoxGeometry(doc.width_x, PLATE_THICKNESS, doc.depth_z);
  const material = new THREE.MeshLambertMaterial({
    color: plateColour(doc.energy_shade, doc.is_down),
    wireframe: doc.is_down,
    transparent: true,
    opacity: OPAQUE_OPACITY,
  });
  const mesh = new THREE.Mesh(geometry, material);
  mesh.name = `plate:${doc.hypervisor_id}`;
  mesh.position.set(doc.width_x / 2, -PLATE_THICKNESS / 2, doc.depth_z / 2);
  const data: EntityUserData = {
    kind: "plate",
    id: doc.hypervisor_id,
    doc,
    baseOpacity: OPAQUE_OPACITY,
    blinking: doc.is_blinking,
  };
  mesh.userData = data;
  return mesh;
}

function boxMesh(doc: BoxDoc): THREE.Mesh {
  const geometry = new THREE.BoxGeometry(doc.width_x, doc.height_y, doc.depth_z);
  const opacity = doc.translucent ? TRANSLUCENT_OPACITY : OPAQUE_OPACITY;
  const material = new THREE.MeshLambertMaterial({
    color: boxColour(doc.colour_hue),
    transparent: true,
    opacity,
  });
  const mesh = new THREE.Mesh(geometry, material);
  mesh.name = `box:${doc.instance_id}`;
  mesh.position.set(
    doc.pos_x + doc.width_x / 2,
    doc.height_y / 2,
    doc.pos_z + doc.depth_z / 2,
  );
  const data: EntityUserData = {
    kind: "box",
    id: doc.instance_id,
    doc,
    baseOpacity: opacity,
    blinking: doc.is_blinking,
  };
  mesh.userData = data;
  return mesh;
}

export class ClusterScene {
  readonly root = new THREE.Group();
  private plateGroups = new Map<string, THREE.Group>();
  private boxMeshes = new Map<string, THREE.Mesh>();
  private current: SceneDoc | null = null;

  constructor() {
    this.root.name = "cluster";
  }

  get doc(): SceneDoc | null {
    return this.current;
  }

  /** Replace the graph with the given snapshot. */
  update(doc: SceneDoc): void {
    for (const child of [...this.root.children]) {
      this.root.remove(child);
      child.traverse((node) => {
        const mesh = node as THREE.Mesh;
        mesh.geometry?.dispose?.();
        (mesh.material as THREE.Material | undefined)?.dispose?.();
      });
    }
    this.plateGroups.clear();
    this.boxMeshes.clear();

    let offsetX = 0;
    for (const plate of doc.plates) {
      const group = new THREE.Group();
      group.name = `plate-group:${plate.hypervisor_id}`;
      group.position.set(offsetX, 0, 0);
      group.add(plateMesh(plate));
      group.add(gridLines(plate.width_x, plate.depth_z));
      this.plateGroups.set(plate.hypervisor_id, group);
      this.root.add(group);
      offsetX += plate.width_x + PLATE_GAP;
    }
    for (const box of doc.boxes) {
      const group = this.plateGroups.get(box.hypervisor_id);
      if (group === undefined) continue; // defensive: gateway guarantees placement
      const mesh = boxMesh(box);
      this.boxMeshes.set(box.instance_id, mesh);
      group.add(mesh);
    }
    this.current = doc;
  }

  plates(): THREE.Mesh[] {
    return [...this.plateGroups.values()].map(
      (group) => group.children.find((c) => c.name.startsWith("plate:")) as THREE.Mesh,
    );
  }

  boxes(): THREE.Mesh[] {
    return [...this.boxMeshes.values()];
  }

  box(instanceId: string): THREE.Mesh | undefined {
    return this.boxMeshes.get(instanceId);
  }

  plate(hypervisorId: string): THREE.Mesh | undefined {
    return this.plateGroups
      .get(hypervisorId)
      ?.children.find((c) => c.name.startsWith("plate:")) as THREE.Mesh | undefined;
  }

  /** The plate a box mesh currently sits on, from graph structure alone. */
  plateOfBox(instanceId: string): string | undefined {
    const mesh = this.boxMeshes.get(instanceId);
    const groupName = mesh?.parent?.name ?? "";
    return groupName.startsWith("plate-group:") ? groupName.slice("plate-group:".length) : undefined;
  }

  /** Everything the raycaster should consider. */
  pickables(): THREE.Object3D[] {
    return [...this.plates(), ...this.boxes()];
  }
}
