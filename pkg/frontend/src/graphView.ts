// Force-directed node-link editor on a 2D canvas. Pure rendering plus hit
// testing; all mutations go through callbacks into the state machine.

import type { GraphDoc, GraphEdgeDoc } from "./types.js";
import type { Selection } from "./state.js";

interface NodePos {
  x: number;
  y: number;
  vx: number;
  vy: number;
}

export interface GraphViewCallbacks {
  onSelectNode(id: number): void;
  onSelectEdge(edge: GraphEdgeDoc): void;
  onClearSelection(): void;
}

const CATEGORY_COLORS = [
  "#8dd3c7", "#ffffb3", "#bebada", "#fb8072", "#80b1d3", "#fdb462",
  "#b3de69", "#fccde5", "#d9d9d9", "#bc80bd", "#ccebc5", "#ffed6f",
];

const contextCache = new WeakMap<HTMLCanvasElement, CanvasRenderingContext2D | null>();

/** 2D context, or null where canvas is unavailable (headless test DOMs). */
export function get2d(canvas: HTMLCanvasElement): CanvasRenderingContext2D | null {
  if (!contextCache.has(canvas)) {
    let ctx: CanvasRenderingContext2D | null = null;
    try {
      ctx = canvas.getContext("2d");
    } catch {
      ctx = null;
    }
    contextCache.set(canvas, ctx);
  }
  return contextCache.get(canvas) ?? null;
}

export function categoryColor(categories: string[], name: string): string {
  const idx = Math.max(0, categories.indexOf(name));
  return CATEGORY_COLORS[idx % CATEGORY_COLORS.length];
}

export class GraphView {
  private positions = new Map<number, NodePos>();
  private dragging: number | null = null;
  private graph: GraphDoc = { objects: [], edges: [] };
  private selection: Selection = null;
  private unattached: number[] = [];
  private pendingEdgeKeys = new Set<string>();
  private pendingNodeIds = new Set<number>();
  private categories: string[] = [];

  constructor(
    private canvas: HTMLCanvasElement,
    private callbacks: GraphViewCallbacks,
  ) {
    canvas.addEventListener("mousedown", (e) => this.onDown(e));
    canvas.addEventListener("mousemove", (e) => this.onMove(e));
    canvas.addEventListener("mouseup", () => (this.dragging = null));
    canvas.addEventListener("mouseleave", () => (this.dragging = null));
  }

  update(
    graph: GraphDoc,
    selection: Selection,
    unattached: number[],
    pendingNodeIds: number[],
    pendingEdges: GraphEdgeDoc[],
    relabeledEdges: GraphEdgeDoc[],
    categories: string[],
  ): void {
    this.graph = graph;
    this.selection = selection;
    this.unattached = unattached;
    this.categories = categories;
    this.pendingNodeIds = new Set(pendingNodeIds);
    this.pendingEdgeKeys = new Set(
      [...pendingEdges, ...relabeledEdges].map((e) => this.edgeKey(e)),
    );
    for (const node of graph.objects) {
      if (!this.positions.has(node.id)) {
        const angle = (node.id * 2.399963) % (2 * Math.PI); // golden-angle spiral
        const r = 60 + 22 * Math.sqrt(node.id + 1);
        this.positions.set(node.id, {
          x: this.canvas.width / 2 + r * Math.cos(angle),
          y: this.canvas.height / 2 + r * Math.sin(angle),
          vx: 0,
          vy: 0,
        });
      }
    }
    for (const id of [...this.positions.keys()]) {
      if (!graph.objects.some((n) => n.id === id)) this.positions.delete(id);
    }
  }

  private edgeKey(e: GraphEdgeDoc): string {
    return `${e.src}->${e.dst}:${e.predicate}`;
  }

  /** One relaxation step of the force layout; cheap enough per frame. */
  tick(): void {
    const nodes = this.graph.objects;
    const k = 90;
    for (const a of nodes) {
      const pa = this.positions.get(a.id)!;
      let fx = 0;
      let fy = 0;
      for (const b of nodes) {
        if (a.id === b.id) continue;
        const pb = this.positions.get(b.id)!;
        const dx = pa.x - pb.x;
        const dy = pa.y - pb.y;
        const d2 = Math.max(dx * dx + dy * dy, 25);
        const rep = (k * k) / d2;
        fx += dx * rep * 0.02;
        fy += dy * rep * 0.02;
      }
      for (const e of this.graph.edges) {
        if (e.src !== a.id && e.dst !== a.id) continue;
        const other = e.src === a.id ? e.dst : e.src;
        const po = this.positions.get(other);
        if (!po) continue;
        const dx = po.x - pa.x;
        const dy = po.y - pa.y;
        const dist = Math.sqrt(dx * dx + dy * dy) || 1;
        const attract = (dist - k) * 0.01;
        fx += (dx / dist) * attract * k * 0.08;
        fy += (dy / dist) * attract * k * 0.08;
      }
      fx += (this.canvas.width / 2 - pa.x) * 0.002;
      fy += (this.canvas.height / 2 - pa.y) * 0.002;
      if (this.dragging !== a.id) {
        pa.vx = (pa.vx + fx) * 0.72;
        pa.vy = (pa.vy + fy) * 0.72;
        pa.x += pa.vx;
        pa.y += pa.vy;
      }
    }
  }

  private hitNode(x: number, y: number): number | null {
    for (const node of [...this.graph.objects].reverse()) {
      const p = this.positions.get(node.id)!;
      if (Math.hypot(p.x - x, p.y - y) <= 18) return node.id;
    }
    return null;
  }

  private hitEdge(x: number, y: number): GraphEdgeDoc | null {
    for (const e of this.graph.edges) {
      const a = this.positions.get(e.src);
      const b = this.positions.get(e.dst);
      if (!a || !b) continue;
      const mx = (a.x + b.x) / 2;
      const my = (a.y + b.y) / 2;
      if (Math.hypot(mx - x, my - y) <= 14) return e;
    }
    return null;
  }

  private canvasPoint(e: MouseEvent): { x: number; y: number } {
    const rect = this.canvas.getBoundingClientRect();
    return { x: e.clientX - rect.left, y: e.clientY - rect.top };
  }

  private onDown(e: MouseEvent): void {
    const { x, y } = this.canvasPoint(e);
    const nodeId = this.hitNode(x, y);
    if (nodeId !== null) {
      this.dragging = nodeId;
      this.callbacks.onSelectNode(nodeId);
      return;
    }
    const edge = this.hitEdge(x, y);
    if (edge) {
      this.callbacks.onSelectEdge(edge);
      return;
    }
    this.callbacks.onClearSelection();
  }

  private onMove(e: MouseEvent): void {
    if (this.dragging === null) return;
    const { x, y } = this.canvasPoint(e);
    const p = this.positions.get(this.dragging);
    if (p) {
      p.x = x;
      p.y = y;
      p.vx = 0;
      p.vy = 0;
    }
  }

  render(): void {
    const ctx = get2d(this.canvas);
    if (!ctx) return;
    ctx.clearRect(0, 0, this.canvas.width, this.canvas.height);
    ctx.font = "11px sans-serif";

    for (const e of this.graph.edges) {
      const a = this.positions.get(e.src);
      const b = this.positions.get(e.dst);
      if (!a || !b) continue;
      const pending = this.pendingEdgeKeys.has(this.edgeKey(e));
      const selected =
        this.selection?.kind === "edge" &&
        this.selection.edge.src === e.src &&
        this.selection.edge.dst === e.dst &&
        this.selection.edge.predicate === e.predicate;
      ctx.strokeStyle = selected ? "#ff9f1c" : pending ? "#4ea8de" : "#9a9a9a";
      ctx.setLineDash(pending ? [6, 4] : []);
      ctx.lineWidth = selected ? 2.5 : 1.5;
      ctx.beginPath();
      ctx.moveTo(a.x, a.y);
      ctx.lineTo(b.x, b.y);
      ctx.stroke();
      ctx.setLineDash([]);
      // arrow head
      const ang = Math.atan2(b.y - a.y, b.x - a.x);
      const tipX = b.x - 20 * Math.cos(ang);
      const tipY = b.y - 20 * Math.sin(ang);
      ctx.beginPath();
      ctx.moveTo(tipX, tipY);
      ctx.lineTo(tipX - 8 * Math.cos(ang - 0.4), tipY - 8 * Math.sin(ang - 0.4));
      ctx.lineTo(tipX - 8 * Math.cos(ang + 0.4), tipY - 8 * Math.sin(ang + 0.4));
      ctx.fillStyle = ctx.strokeStyle;
      ctx.fill();
      // predicate badge
      const mx = (a.x + b.x) / 2;
      const my = (a.y + b.y) / 2;
      ctx.fillStyle = "#333";
      const label = e.predicate;
      const width = ctx.measureText(label).width;
      ctx.fillStyle = "rgba(255,255,255,0.85)";
      ctx.fillRect(mx - width / 2 - 3, my - 8, width + 6, 14);
      ctx.fillStyle = pending ? "#1d6fa5" : "#333";
      ctx.textAlign = "center";
      ctx.fillText(label, mx, my + 3);
    }

    for (const node of this.graph.objects) {
      const p = this.positions.get(node.id)!;
      const selected = this.selection?.kind === "node" && this.selection.id === node.id;
      const pending = this.pendingNodeIds.has(node.id);
      ctx.beginPath();
      ctx.arc(p.x, p.y, 16, 0, 2 * Math.PI);
      ctx.fillStyle = categoryColor(this.categories, node.category);
      ctx.fill();
      ctx.lineWidth = selected ? 3 : 1.5;
      ctx.setLineDash(pending ? [4, 3] : []);
      ctx.strokeStyle = selected ? "#ff9f1c" : pending ? "#1d6fa5" : "#555";
      ctx.stroke();
      ctx.setLineDash([]);
      if (this.unattached.includes(node.id)) {
        ctx.fillStyle = "#d62828";
        ctx.textAlign = "center";
        ctx.fillText("unattached", p.x, p.y - 22);
      }
      ctx.fillStyle = "#222";
      ctx.textAlign = "center";
      ctx.fillText(`${node.category} #${node.id}`, p.x, p.y + 30);
    }
  }
}
