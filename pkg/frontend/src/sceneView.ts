// Interactive 3D viewer on a plain 2D canvas: orbit/pan/zoom camera with a
// software perspective projection, box wireframes with category colors and
// labels, optional point clouds, change highlighting, and a low-opacity ghost
// of the previous scene for visual diffing.

import type { BoxDoc, SceneDoc } from "./types.js";
import { categoryColor, get2d } from "./graphView.js";

interface Camera {
  azimuth: number; // radians around z
  elevation: number;
  distance: number;
  target: [number, number, number];
}

type Vec3 = [number, number, number];

export function boxCorners(box: BoxDoc): Vec3[] {
  const a = (box.alpha_deg * Math.PI) / 180;
  const c = Math.cos(a);
  const s = Math.sin(a);
  const corners: Vec3[] = [];
  for (const sz of [-0.5, 0.5]) {
    for (const [sx, sy] of [
      [-0.5, -0.5],
      [0.5, -0.5],
      [0.5, 0.5],
      [-0.5, 0.5],
    ]) {
      const lx = sx * box.w;
      const ly = sy * box.l;
      corners.push([
        box.cx + c * lx - s * ly,
        box.cy + s * lx + c * ly,
        box.cz + sz * box.h,
      ]);
    }
  }
  return corners;
}

const BOX_SEGMENTS: [number, number][] = [
  [0, 1], [1, 2], [2, 3], [3, 0],
  [4, 5], [5, 6], [6, 7], [7, 4],
  [0, 4], [1, 5], [2, 6], [3, 7],
];

export class SceneView {
  camera: Camera = { azimuth: -0.9, elevation: 0.5, distance: 8, target: [0, 0, 0.4] };
  showPoints = true;
  private scene: SceneDoc | null = null;
  private ghost: SceneDoc | null = null;
  private changed = new Set<number>();
  private categories: string[] = [];
  private selectedId: number | null = null;
  private dragButton: number | null = null;
  private lastX = 0;
  private lastY = 0;

  constructor(
    private canvas: HTMLCanvasElement,
    private onPickObject: (id: number) => void,
  ) {
    canvas.addEventListener("mousedown", (e) => {
      this.dragButton = e.button;
      this.lastX = e.clientX;
      this.lastY = e.clientY;
    });
    canvas.addEventListener("mousemove", (e) => this.onDrag(e));
    canvas.addEventListener("mouseup", (e) => {
      if (
        this.dragButton !== null &&
        Math.hypot(e.clientX - this.lastX, e.clientY - this.lastY) < 3 &&
        e.button === 0
      ) {
        this.pick(e);
      }
      this.dragButton = null;
    });
    canvas.addEventListener("mouseleave", () => (this.dragButton = null));
    canvas.addEventListener("wheel", (e) => {
      e.preventDefault();
      this.camera.distance = Math.min(40, Math.max(1.5, this.camera.distance * (e.deltaY > 0 ? 1.1 : 0.9)));
    });
    canvas.addEventListener("contextmenu", (e) => e.preventDefault());
  }

  update(
    scene: SceneDoc | null,
    ghost: SceneDoc | null,
    changedIds: number[],
    categories: string[],
    selectedId: number | null,
  ): void {
    this.scene = scene;
    this.ghost = ghost;
    this.changed = new Set(changedIds);
    this.categories = categories;
    this.selectedId = selectedId;
  }

  private onDrag(e: MouseEvent): void {
    if (this.dragButton === null) return;
    const dx = e.clientX - this.lastX;
    const dy = e.clientY - this.lastY;
    this.lastX = e.clientX;
    this.lastY = e.clientY;
    if (this.dragButton === 0) {
      this.camera.azimuth -= dx * 0.008;
      this.camera.elevation = Math.min(1.5, Math.max(-0.2, this.camera.elevation + dy * 0.006));
    } else {
      // pan in the camera plane
      const scale = this.camera.distance * 0.002;
      const ca = Math.cos(this.camera.azimuth);
      const sa = Math.sin(this.camera.azimuth);
      this.camera.target[0] -= (-sa * dx - ca * dy) * scale;
      this.camera.target[1] -= (ca * dx - sa * dy) * scale;
    }
  }

  project(p: Vec3): [number, number, number] | null {
    const { azimuth, elevation, distance, target } = this.camera;
    const ce = Math.cos(elevation);
    const se = Math.sin(elevation);
    const ca = Math.cos(azimuth);
    const sa = Math.sin(azimuth);
    const eye: Vec3 = [
      target[0] + distance * ce * ca,
      target[1] + distance * ce * sa,
      target[2] + distance * se,
    ];
    // camera basis: forward toward target, right and up orthonormal
    const f: Vec3 = [target[0] - eye[0], target[1] - eye[1], target[2] - eye[2]];
    const fl = Math.hypot(...f);
    const fw: Vec3 = [f[0] / fl, f[1] / fl, f[2] / fl];
    const right: Vec3 = [-fw[1], fw[0], 0];
    const rl = Math.hypot(...right) || 1;
    right[0] /= rl;
    right[1] /= rl;
    const up: Vec3 = [
      right[1] * fw[2] - right[2] * fw[1],
      right[2] * fw[0] - right[0] * fw[2],
      right[0] * fw[1] - right[1] * fw[0],
    ];
    const d: Vec3 = [p[0] - eye[0], p[1] - eye[1], p[2] - eye[2]];
    const zc = d[0] * fw[0] + d[1] * fw[1] + d[2] * fw[2];
    if (zc < 0.05) return null;
    const xc = d[0] * right[0] + d[1] * right[1] + d[2] * right[2];
    const yc = d[0] * up[0] + d[1] * up[1] + d[2] * up[2];
    const focal = 1.2 * Math.min(this.canvas.width, this.canvas.height);
    return [
      this.canvas.width / 2 + (focal * xc) / zc,
      this.canvas.height / 2 - (focal * yc) / zc,
      zc,
    ];
  }

  private pick(e: MouseEvent): void {
    if (!this.scene) return;
    const rect = this.canvas.getBoundingClientRect();
    const x = e.clientX - rect.left;
    const y = e.clientY - rect.top;
    let best: { id: number; d: number } | null = null;
    for (const obj of this.scene.objects) {
      const p = this.project([obj.box.cx, obj.box.cy, obj.box.cz]);
      if (!p) continue;
      const d = Math.hypot(p[0] - x, p[1] - y);
      if (d < 40 && (!best || d < best.d)) best = { id: obj.id, d };
    }
    if (best) this.onPickObject(best.id);
  }

  private drawScene(ctx: CanvasRenderingContext2D, scene: SceneDoc, alpha: number, live: boolean): void {
    for (const obj of scene.objects) {
      const corners = boxCorners(obj.box).map((c) => this.project(c));
      const changed = live && this.changed.has(obj.id);
      const selected = live && this.selectedId === obj.id;
      const color = changed ? "#ff3d00" : categoryColor(this.categories, obj.category);
      ctx.globalAlpha = alpha;
      ctx.strokeStyle = selected ? "#ff9f1c" : color;
      ctx.lineWidth = changed || selected ? 2.6 : 1.3;
      for (const [i, j] of BOX_SEGMENTS) {
        const a = corners[i];
        const b = corners[j];
        if (!a || !b) continue;
        ctx.beginPath();
        ctx.moveTo(a[0], a[1]);
        ctx.lineTo(b[0], b[1]);
        ctx.stroke();
      }
      if (live && this.showPoints && obj.points) {
        ctx.fillStyle = color;
        for (const pt of obj.points) {
          const p = this.project([pt[0], pt[1], pt[2]]);
          if (p) ctx.fillRect(p[0] - 1, p[1] - 1, 2, 2);
        }
      }
      if (live) {
        const top = this.project([obj.box.cx, obj.box.cy, obj.box.cz + obj.box.h / 2 + 0.08]);
        if (top) {
          ctx.globalAlpha = 1;
          ctx.fillStyle = changed ? "#ff3d00" : "#333";
          ctx.font = "11px sans-serif";
          ctx.textAlign = "center";
          ctx.fillText(`${obj.category} #${obj.id}`, top[0], top[1]);
        }
      }
    }
    ctx.globalAlpha = 1;
  }

  render(): void {
    const ctx = get2d(this.canvas);
    if (!ctx) return;
    ctx.clearRect(0, 0, this.canvas.width, this.canvas.height);
    // floor grid
    ctx.strokeStyle = "#e0e0e0";
    ctx.lineWidth = 1;
    for (let i = -2; i <= 2; i += 0.5) {
      const a = this.project([i, -2, 0]);
      const b = this.project([i, 2, 0]);
      const c = this.project([-2, i, 0]);
      const d = this.project([2, i, 0]);
      if (a && b) {
        ctx.beginPath();
        ctx.moveTo(a[0], a[1]);
        ctx.lineTo(b[0], b[1]);
        ctx.stroke();
      }
      if (c && d) {
        ctx.beginPath();
        ctx.moveTo(c[0], c[1]);
        ctx.lineTo(d[0], d[1]);
        ctx.stroke();
      }
    }
    if (this.ghost) this.drawScene(ctx, this.ghost, 0.18, false);
    if (this.scene) this.drawScene(ctx, this.scene, 1.0, true);
  }
}
