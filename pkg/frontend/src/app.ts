/** Browser entry point: renderer, camera, pointer wiring, stream plumbing.
 *
 * Everything with behaviour worth testing lives in the other modules;
 * this file only connects them to the DOM and keeps the current scene
 * document as the single source of truth. Any event on the stream
 * schedules a fresh GET /scene rather than patching local state, so
 * the picture never drifts from what the service published.
 */

import * as THREE from "three";
import { OrbitControls } from "three/examples/jsm/controls/OrbitControls.js";

import { applyBlink } from "./blink";
import { GatewayClient, EventStream } from "./gateway";
import { InteractionController } from "./interactions";
import type { PickTarget, UiAction } from "./interactions";
import { ClusterScene } from "./scene";
import type { EntityUserData } from "./scene";
import { LiveDetails, tooltipForBox, tooltipForPlate } from "./tooltip";
import type { BoxDoc, EventDoc, PlateDoc } from "./types";

const TOAST_MS = 4000;
const REFRESH_DEBOUNCE_MS = 120;

function el(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (node === null) throw new Error(`missing #${id}`);
  return node;
}

const container = el("view");
const tooltipEl = el("tooltip");
const toastEl = el("toast");
const bannerEl = el("banner");
const statusEl = el("status");

const renderer = new THREE.WebGLRenderer({ antialias: true });
renderer.setPixelRatio(window.devicePixelRatio);
container.appendChild(renderer.domElement);

const world = new THREE.Scene();
world.background = new THREE.Color(0x14161a);
world.add(new THREE.AmbientLight(0xffffff, 0.7));
const sun = new THREE.DirectionalLight(0xffffff, 1.4);
sun.position.set(6, 14, 8);
world.add(sun);

const camera = new THREE.PerspectiveCamera(55, 1, 0.1, 500);
camera.position.set(12, 14, 18);
const controls = new OrbitControls(camera, renderer.domElement);
controls.target.set(9, 0, 2);
controls.enableDamping = true;

const cluster = new ClusterScene();
world.add(cluster.root);

function resize(): void {
  const w = container.clientWidth;
  const h = container.clientHeight;
  renderer.setSize(w, h);
  camera.aspect = w / h;
  camera.updateProjectionMatrix();
}
window.addEventListener("resize", resize);

const gateway = new GatewayClient("");
const live = new LiveDetails();
const interactions = new InteractionController({
  box: (id) => cluster.doc?.boxes.find((b) => b.instance_id === id),
  plate: (id) => cluster.doc?.plates.find((p) => p.hypervisor_id === id),
  liveStatus: (id) => live.status(id),
});

let toastTimer: number | undefined;
function toast(message: string): void {
  toastEl.textContent = message;
  toastEl.classList.add("visible");
  window.clearTimeout(toastTimer);
  toastTimer = window.setTimeout(() => toastEl.classList.remove("visible"), TOAST_MS);
}

function banner(message: string | null): void {
  if (message === null) {
    bannerEl.classList.remove("visible");
  } else {
    bannerEl.textContent = message;
    bannerEl.classList.add("visible");
  }
}

let refreshTimer: number | undefined;
function scheduleRefresh(): void {
  window.clearTimeout(refreshTimer);
  refreshTimer = window.setTimeout(() => void refresh(), REFRESH_DEBOUNCE_MS);
}

async function refresh(): Promise<void> {
  try {
    const doc = await gateway.fetchScene();
    cluster.update(doc);
    banner(doc.stale ? "showing last good view; cloud unreachable" : null);
    statusEl.textContent = `seq ${doc.at_seq}`;
  } catch (err) {
    // keep the last good frame on any bad response
    banner(`scene unavailable: ${err instanceof Error ? err.message : String(err)}`);
  }
}

const stream = new EventStream("", {
  onEvent: (_seq: number, doc: EventDoc) => {
    live.ingest(doc);
    scheduleRefresh();
  },
  onResync: () => void refresh(),
  onStatusChange: (connected: boolean) => {
    statusEl.classList.toggle("offline", !connected);
    if (connected) scheduleRefresh();
  },
});

// --- picking -----------------------------------------------------------

const raycaster = new THREE.Raycaster();
const pointerNdc = new THREE.Vector2();
const dragPlane = new THREE.Plane(new THREE.Vector3(0, 1, 0), 0);
const dragPoint = new THREE.Vector3();
let dragMesh: THREE.Mesh | null = null;
let lastClientX = 0;
let lastClientY = 0;

function pickAt(clientX: number, clientY: number, platesOnly: boolean): PickTarget {
  const rect = renderer.domElement.getBoundingClientRect();
  pointerNdc.set(
    ((clientX - rect.left) / rect.width) * 2 - 1,
    -((clientY - rect.top) / rect.height) * 2 + 1,
  );
  raycaster.setFromCamera(pointerNdc, camera);
  const candidates = platesOnly ? cluster.plates() : cluster.pickables();
  const hits = raycaster.intersectObjects(candidates, false);
  for (const hit of hits) {
    const data = hit.object.userData as EntityUserData;
    if (dragMesh !== null && hit.object === dragMesh) continue;
    if (data.kind === "plate" || data.kind === "box") return { kind: data.kind, id: data.id };
  }
  return null;
}

function run(actions: UiAction[]): void {
  for (const action of actions) void runOne(action);
}

async function runOne(action: UiAction): Promise<void> {
  switch (action.action) {
    case "command": {
      const result = await gateway.postCommand(action.body);
      if (!result.accepted) toast(`${action.body.kind} refused: ${result.message ?? result.reason}`);
      break;
    }
    case "tooltip-show": {
      const doc = cluster.doc;
      if (doc === null) break;
      const content =
        action.target.kind === "box"
          ? tooltipForBox(doc.boxes.find((b) => b.instance_id === action.target.id) as BoxDoc, live)
          : tooltipForPlate(doc.plates.find((p) => p.hypervisor_id === action.target.id) as PlateDoc, live);
      tooltipEl.innerHTML = "";
      const title = document.createElement("strong");
      title.textContent = content.title;
      tooltipEl.appendChild(title);
      for (const line of content.lines) {
        const row = document.createElement("div");
        row.textContent = line;
        tooltipEl.appendChild(row);
      }
      tooltipEl.style.left = `${lastClientX + 14}px`;
      tooltipEl.style.top = `${lastClientY + 14}px`;
      tooltipEl.classList.add("visible");
      break;
    }
    case "tooltip-hide":
      tooltipEl.classList.remove("visible");
      break;
    case "drag-begin":
      dragMesh = cluster.box(action.instanceId) ?? null;
      controls.enabled = false;
      break;
    case "drag-end":
      dragMesh = null;
      controls.enabled = true;
      if (cluster.doc !== null) cluster.update(cluster.doc); // snap meshes home
      scheduleRefresh();
      break;
  }
}

renderer.domElement.addEventListener("contextmenu", (e) => e.preventDefault());

renderer.domElement.addEventListener("pointerdown", (e) => {
  if (e.button !== 0 && e.button !== 2) return;
  lastClientX = e.clientX;
  lastClientY = e.clientY;
  run(
    interactions.sample({
      type: "down",
      button: e.button as 0 | 2,
      timeMs: performance.now(),
      target: pickAt(e.clientX, e.clientY, false),
    }),
  );
  if (interactions.dragging || e.button === 2) controls.enabled = false;
});

renderer.domElement.addEventListener("pointermove", (e) => {
  lastClientX = e.clientX;
  lastClientY = e.clientY;
  run(
    interactions.sample({
      type: "move",
      timeMs: performance.now(),
      target: pickAt(e.clientX, e.clientY, interactions.dragging),
    }),
  );
  if (dragMesh !== null) {
    raycaster.setFromCamera(pointerNdc, camera);
    if (raycaster.ray.intersectPlane(dragPlane, dragPoint) !== null) {
      dragMesh.parent?.worldToLocal(dragPoint);
      const lift = (dragMesh.userData as EntityUserData).doc as BoxDoc;
      dragMesh.position.set(dragPoint.x, lift.height_y / 2 + 0.6, dragPoint.z);
    }
  }
});

renderer.domElement.addEventListener("pointerup", (e) => {
  if (e.button !== 0 && e.button !== 2) return;
  run(
    interactions.sample({
      type: "up",
      button: e.button as 0 | 2,
      timeMs: performance.now(),
      target: pickAt(e.clientX, e.clientY, e.button === 0 && interactions.dragging),
    }),
  );
  controls.enabled = true;
});

renderer.domElement.addEventListener("pointerleave", () => {
  run(interactions.sample({ type: "leave", timeMs: performance.now(), target: null }));
  controls.enabled = true;
});

// --- main loop ----------------------------------------------------------

function frame(): void {
  requestAnimationFrame(frame);
  const now = performance.now();
  run(interactions.advance(now));
  applyBlink([...cluster.boxes(), ...cluster.plates()], now);
  controls.update();
  renderer.render(world, camera);
}

resize();
void refresh();
stream.start();
frame();
