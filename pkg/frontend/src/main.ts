// Studio wiring: DOM structure, toolbar actions, request lifecycle. The app
// keeps exactly one in-flight request; stale responses (an older token) are
// discarded. Every displayed scene is the verbatim body of a server response.

import { ApiError, StudioApi } from "./api.js";
import { GraphView } from "./graphView.js";
import { SceneView } from "./sceneView.js";
import {
  EditError,
  EditorState,
  addEdge,
  addNode,
  commitGenerate,
  commitManipulate,
  deleteNode,
  displayGraph,
  effectiveGraph,
  effectiveScene,
  hasPendingChange,
  initialState,
  loadGraph,
  relabelEdge,
  unattachedNodeIds,
} from "./state.js";
import type { GraphDoc } from "./types.js";

export class StudioApp {
  state: EditorState = initialState();
  api: StudioApi;
  graphView!: GraphView;
  sceneView!: SceneView;
  private root: HTMLElement;
  private els: Record<string, HTMLElement> = {};

  constructor(root: HTMLElement, baseUrl: string) {
    this.root = root;
    this.api = new StudioApi(baseUrl);
    this.buildDom();
  }

  private el<T extends HTMLElement>(name: string): T {
    return this.els[name] as T;
  }

  private buildDom(): void {
    this.root.innerHTML = `
      <div class="toolbar">
        <span class="brand">scene studio</span>
        <label>category <select id="category-select"></select></label>
        <button id="add-node">add node</button>
        <label>predicate <select id="predicate-select"></select></label>
        <button id="add-edge">add edge</button>
        <button id="relabel-edge">relabel</button>
        <button id="delete-node">delete node</button>
        <span class="spacer"></span>
        <label>seed <input id="seed-input" type="number" value="0"></label>
        <button id="run-generate">generate</button>
        <button id="run-manipulate" disabled>manipulate</button>
        <label><input id="toggle-points" type="checkbox" checked> points</label>
      </div>
      <div class="panes">
        <canvas id="graph-canvas" width="560" height="640"></canvas>
        <canvas id="scene-canvas" width="760" height="640"></canvas>
      </div>
      <div id="status-bar"><span id="change-summary"></span><span id="toast"></span></div>
    `;
    for (const id of [
      "category-select", "predicate-select", "add-node", "add-edge", "relabel-edge",
      "delete-node", "seed-input", "run-generate", "run-manipulate", "toggle-points",
      "graph-canvas", "scene-canvas", "toast", "change-summary",
    ]) {
      this.els[id] = this.root.querySelector(`#${id}`) as HTMLElement;
    }

    this.graphView = new GraphView(this.el<HTMLCanvasElement>("graph-canvas"), {
      onSelectNode: (id) => this.setState({ ...this.state, selection: { kind: "node", id } }),
      onSelectEdge: (edge) => this.setState({ ...this.state, selection: { kind: "edge", edge } }),
      onClearSelection: () => this.setState({ ...this.state, selection: null }),
    });
    this.sceneView = new SceneView(this.el<HTMLCanvasElement>("scene-canvas"), (id) =>
      this.setState({ ...this.state, selection: { kind: "node", id } }),
    );

    this.el("add-node").addEventListener("click", () => this.tryEdit(() =>
      addNode(this.state, this.el<HTMLSelectElement>("category-select").value)));
    this.el("add-edge").addEventListener("click", () => this.onAddEdge());
    this.el("relabel-edge").addEventListener("click", () => this.onRelabel());
    this.el("delete-node").addEventListener("click", () => this.onDeleteNode());
    this.el("run-generate").addEventListener("click", () => void this.runGenerate());
    this.el("run-manipulate").addEventListener("click", () => void this.runManipulate());
    this.el<HTMLInputElement>("seed-input").addEventListener("change", () => {
      this.state.seed = Number(this.el<HTMLInputElement>("seed-input").value) || 0;
    });
    this.el<HTMLInputElement>("toggle-points").addEventListener("change", () => {
      this.sceneView.showPoints = this.el<HTMLInputElement>("toggle-points").checked;
    });
  }

  async start(): Promise<void> {
    try {
      const vocab = await this.api.vocab();
      this.setState({ ...this.state, vocab });
      const cat = this.el<HTMLSelectElement>("category-select");
      cat.innerHTML = vocab.objects.map((o) => `<option>${o}</option>`).join("");
      const pred = this.el<HTMLSelectElement>("predicate-select");
      pred.innerHTML = vocab.predicates.map((p) => `<option>${p}</option>`).join("");
    } catch (err) {
      this.toast(`cannot reach the scene service: ${String(err)}`);
    }
    const frame = () => {
      this.graphView.tick();
      this.graphView.render();
      this.sceneView.render();
      requestAnimationFrame(frame);
    };
    if (typeof requestAnimationFrame === "function") frame();
  }

  setState(next: EditorState): void {
    this.state = next;
    this.sync();
  }

  private tryEdit(edit: () => EditorState): void {
    try {
      this.setState(edit());
      this.toast(null);
    } catch (err) {
      if (err instanceof EditError) this.toast(err.message);
      else throw err;
    }
  }

  private onAddEdge(): void {
    const sel = this.state.selection;
    if (sel?.kind !== "node") {
      this.toast("select the source node first, then add edge targets the next click");
      return;
    }
    const target = window.prompt("destination node id");
    if (target === null) return;
    this.tryEdit(() =>
      addEdge(this.state, sel.id, Number(target),
        this.el<HTMLSelectElement>("predicate-select").value));
  }

  private onRelabel(): void {
    const sel = this.state.selection;
    if (sel?.kind !== "edge") {
      this.toast("select an edge to relabel");
      return;
    }
    this.tryEdit(() =>
      relabelEdge(this.state, sel.edge, this.el<HTMLSelectElement>("predicate-select").value));
  }

  private onDeleteNode(): void {
    const sel = this.state.selection;
    if (sel?.kind !== "node") {
      this.toast("select a node to delete");
      return;
    }
    this.tryEdit(() => deleteNode(this.state, sel.id));
  }

  toast(message: string | null): void {
    this.state.toast = message;
    this.el("toast").textContent = message ?? "";
  }

  /** Validate the graph that would be submitted; surfaces the report inline. */
  private async preflight(graph: GraphDoc): Promise<boolean> {
    try {
      await this.api.validate(graph);
      return true;
    } catch (err) {
      if (err instanceof ApiError && err.detail.report) {
        this.toast(err.detail.report.map((v) => `${v.kind} at ${v.where}`).join("; "));
      } else {
        this.toast(String(err));
      }
      return false;
    }
  }

  async runGenerate(): Promise<void> {
    const graph = displayGraph(this.state);
    if (!(await this.preflight(graph))) return;
    const token = ++this.state.requestToken;
    this.setBusy(true);
    try {
      const resp = await this.api.generate(graph, this.state.seed);
      if (token !== this.state.requestToken) return; // superseded
      this.setState(commitGenerate(this.state, resp.scene));
      this.toast(null);
    } catch (err) {
      this.toast(String(err));
    } finally {
      this.setBusy(false);
    }
  }

  async runManipulate(): Promise<void> {
    const scene = effectiveScene(this.state);
    if (!scene) {
      this.toast("generate a scene first");
      return;
    }
    const base = effectiveGraph(this.state);
    if (!(await this.preflight(displayGraph(this.state)))) return;
    const token = ++this.state.requestToken;
    this.setBusy(true);
    try {
      const resp = await this.api.manipulate(base, scene, this.state.pending, this.state.seed);
      if (token !== this.state.requestToken) return;
      this.setState(commitManipulate(this.state, resp.scene, resp.changed_ids));
      this.toast(null);
    } catch (err) {
      this.toast(String(err));
    } finally {
      this.setBusy(false);
    }
  }

  loadGraphDoc(graph: GraphDoc): void {
    this.setState(loadGraph(this.state, graph));
  }

  private setBusy(busy: boolean): void {
    this.state.busy = busy;
    (this.el("run-generate") as HTMLButtonElement).disabled = busy;
    this.sync();
  }

  /** Push state into the views and the status bar. */
  sync(): void {
    const graph = displayGraph(this.state);
    const relabeled = this.state.pending.relabeled_edges.map((r) => {
      const base = this.state.baseGraph.edges[r.edge];
      return { ...base, predicate: r.predicate };
    });
    this.graphView.update(
      graph,
      this.state.selection,
      unattachedNodeIds(this.state),
      this.state.pending.added_nodes.map((n) => n.id),
      this.state.pending.added_edges,
      relabeled,
      this.state.vocab?.objects ?? [],
    );
    const selectedId = this.state.selection?.kind === "node" ? this.state.selection.id : null;
    this.sceneView.update(
      effectiveScene(this.state),
      this.state.prevScene,
      this.state.changedIds,
      this.state.vocab?.objects ?? [],
      selectedId,
    );
    const manipulate = this.el<HTMLButtonElement>("run-manipulate");
    manipulate.disabled =
      this.state.busy || !this.state.scene || !hasPendingChange(this.state);
    const p = this.state.pending;
    this.el("change-summary").textContent =
      `pending: +${p.added_nodes.length} nodes, +${p.added_edges.length} edges, ` +
      `${p.relabeled_edges.length} relabels` +
      (this.state.changedIds.length ? ` | last change touched ${this.state.changedIds.join(", ")}` : "");
  }
}

declare global {
  interface Window {
    studio?: StudioApp;
  }
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  const params = new URLSearchParams(window.location.search);
  const backend = params.get("backend") ?? "http://127.0.0.1:8765";
  const app = new StudioApp(document.getElementById("app")!, backend);
  window.studio = app;
  void app.start();
}
