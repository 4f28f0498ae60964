// Editor state machine. The graph being shown and the graph being submitted
// come from one source of truth: a base graph (matching the current scene)
// plus a pending change document. Scenes are stored verbatim as the server
// returned them; deleting a node only filters what is displayed/submitted.

import {
  ChangeDoc,
  GraphDoc,
  GraphEdgeDoc,
  SceneDoc,
  VocabDoc,
  emptyChange,
} from "./types.js";

export type Selection =
  | { kind: "node"; id: number }
  | { kind: "edge"; edge: GraphEdgeDoc }
  | null;

export interface EditorState {
  vocab: VocabDoc | null;
  baseGraph: GraphDoc;
  pending: ChangeDoc;
  deleted: number[]; // ids of base nodes dismissed locally
  scene: SceneDoc | null; // verbatim last server response
  prevScene: SceneDoc | null; // ghosted previous response
  changedIds: number[];
  selection: Selection;
  seed: number;
  requestToken: number; // stale-response guard: one in-flight request wins
  busy: boolean;
  toast: string | null;
}

export function initialState(): EditorState {
  return {
    vocab: null,
    baseGraph: { objects: [], edges: [] },
    pending: emptyChange(),
    deleted: [],
    scene: null,
    prevScene: null,
    changedIds: [],
    selection: null,
    seed: 0,
    requestToken: 0,
    busy: false,
    toast: null,
  };
}

export class EditError extends Error {}

function liveBaseNodes(state: EditorState) {
  return state.baseGraph.objects.filter((n) => !state.deleted.includes(n.id));
}

function liveBaseEdges(state: EditorState) {
  return state.baseGraph.edges.filter(
    (e) => !state.deleted.includes(e.src) && !state.deleted.includes(e.dst),
  );
}

/** The graph to submit as the manipulation base: current scene minus deletions. */
export function effectiveGraph(state: EditorState): GraphDoc {
  return {
    vocab: state.baseGraph.vocab,
    objects: liveBaseNodes(state),
    edges: liveBaseEdges(state),
  };
}

/** Base graph with the pending change applied; what the user actually sees. */
export function displayGraph(state: EditorState): GraphDoc {
  const base = effectiveGraph(state);
  const edges = base.edges.map((e) => {
    const relabel = state.pending.relabeled_edges.find(
      (r) => edgeKey(state.baseGraph.edges[r.edge]) === edgeKey(e),
    );
    return relabel ? { ...e, predicate: relabel.predicate } : e;
  });
  return {
    vocab: base.vocab,
    objects: [...base.objects, ...state.pending.added_nodes],
    edges: [...edges, ...state.pending.added_edges],
  };
}

/** The scene to display/submit: server objects minus locally dismissed ones. */
export function effectiveScene(state: EditorState): SceneDoc | null {
  if (!state.scene) return null;
  return {
    objects: state.scene.objects.filter((o) => !state.deleted.includes(o.id)),
  };
}

export function hasPendingChange(state: EditorState): boolean {
  const p = state.pending;
  return (
    p.added_nodes.length > 0 ||
    p.added_edges.length > 0 ||
    p.relabeled_edges.length > 0
  );
}

function edgeKey(e: GraphEdgeDoc): string {
  return `${e.src}->${e.dst}`;
}

function allNodeIds(state: EditorState): number[] {
  return [...liveBaseNodes(state).map((n) => n.id), ...state.pending.added_nodes.map((n) => n.id)];
}

export function nextNodeId(state: EditorState): number {
  const ids = [...state.baseGraph.objects.map((n) => n.id), ...state.pending.added_nodes.map((n) => n.id)];
  return ids.length ? Math.max(...ids) + 1 : 0;
}

/** Nodes added but not yet wired to anything; flagged in the editor. */
export function unattachedNodeIds(state: EditorState): number[] {
  const touched = new Set<number>();
  for (const e of [...liveBaseEdges(state), ...state.pending.added_edges]) {
    touched.add(e.src);
    touched.add(e.dst);
  }
  return state.pending.added_nodes.map((n) => n.id).filter((id) => !touched.has(id));
}

export function addNode(state: EditorState, category: string): EditorState {
  if (!state.vocab) throw new EditError("vocabulary not loaded yet");
  if (!state.vocab.objects.includes(category)) {
    throw new EditError(`unknown category "${category}"`);
  }
  const node = { id: nextNodeId(state), category };
  return {
    ...state,
    pending: { ...state.pending, added_nodes: [...state.pending.added_nodes, node] },
    selection: { kind: "node", id: node.id },
  };
}

export function addEdge(
  state: EditorState,
  src: number,
  dst: number,
  predicate: string,
): EditorState {
  if (!state.vocab) throw new EditError("vocabulary not loaded yet");
  if (src === dst) throw new EditError("self-loops are not allowed");
  if (!state.vocab.predicates.includes(predicate)) {
    throw new EditError(`unknown predicate "${predicate}"`);
  }
  const ids = allNodeIds(state);
  for (const endpoint of [src, dst]) {
    if (!ids.includes(endpoint)) throw new EditError(`node ${endpoint} does not exist`);
  }
  const edge = { src, dst, predicate };
  return {
    ...state,
    pending: { ...state.pending, added_edges: [...state.pending.added_edges, edge] },
    selection: { kind: "edge", edge },
  };
}

/** Relabel an edge of the displayed graph. Pending edges are edited in
 * place; base edges get a relabel entry (replacing any earlier one). */
export function relabelEdge(
  state: EditorState,
  edge: GraphEdgeDoc,
  predicate: string,
): EditorState {
  if (!state.vocab) throw new EditError("vocabulary not loaded yet");
  if (!state.vocab.predicates.includes(predicate)) {
    throw new EditError(`unknown predicate "${predicate}"`);
  }
  const pendingIdx = state.pending.added_edges.findIndex(
    (e) => e.src === edge.src && e.dst === edge.dst && e.predicate === edge.predicate,
  );
  if (pendingIdx >= 0) {
    const added = state.pending.added_edges.map((e, i) =>
      i === pendingIdx ? { ...e, predicate } : e,
    );
    return { ...state, pending: { ...state.pending, added_edges: added } };
  }
  // match against what the user currently sees: the base predicate or an
  // earlier relabel of the same edge
  const baseIdx = state.baseGraph.edges.findIndex((e, i) => {
    if (e.src !== edge.src || e.dst !== edge.dst) return false;
    const shown =
      state.pending.relabeled_edges.find((r) => r.edge === i)?.predicate ?? e.predicate;
    return shown === edge.predicate;
  });
  if (baseIdx < 0) throw new EditError("edge not found in the current graph");
  const relabels = state.pending.relabeled_edges.filter((r) => r.edge !== baseIdx);
  relabels.push({ edge: baseIdx, predicate });
  return { ...state, pending: { ...state.pending, relabeled_edges: relabels } };
}

/** Remove a node. Added nodes disappear from the pending change with their
 * edges; base nodes are dismissed locally along with every edge and pending
 * entry touching them. */
export function deleteNode(state: EditorState, id: number): EditorState {
  const pending = state.pending;
  const isAdded = pending.added_nodes.some((n) => n.id === id);
  const strippedEdges = pending.added_edges.filter((e) => e.src !== id && e.dst !== id);
  if (isAdded) {
    return {
      ...state,
      pending: {
        ...pending,
        added_nodes: pending.added_nodes.filter((n) => n.id !== id),
        added_edges: strippedEdges,
      },
      selection: null,
    };
  }
  if (!state.baseGraph.objects.some((n) => n.id === id)) {
    throw new EditError(`node ${id} does not exist`);
  }
  const relabels = pending.relabeled_edges.filter((r) => {
    const e = state.baseGraph.edges[r.edge];
    return e.src !== id && e.dst !== id;
  });
  return {
    ...state,
    deleted: [...state.deleted, id],
    pending: { ...pending, added_edges: strippedEdges, relabeled_edges: relabels },
    selection: null,
  };
}

/** Commit a generate response: the displayed graph becomes the new base. */
export function commitGenerate(state: EditorState, scene: SceneDoc): EditorState {
  return {
    ...state,
    baseGraph: displayGraph(state),
    pending: emptyChange(),
    deleted: [],
    prevScene: state.scene,
    scene,
    changedIds: [],
  };
}

/** Commit a manipulate response: pending applied, changed ids highlighted. */
export function commitManipulate(
  state: EditorState,
  scene: SceneDoc,
  changedIds: number[],
): EditorState {
  return {
    ...state,
    baseGraph: displayGraph(state),
    pending: emptyChange(),
    deleted: [],
    prevScene: state.scene,
    scene,
    changedIds,
  };
}

/** Reset to a fresh graph (e.g. a loaded document). */
export function loadGraph(state: EditorState, graph: GraphDoc): EditorState {
  return {
    ...state,
    baseGraph: graph,
    pending: emptyChange(),
    deleted: [],
    scene: null,
    prevScene: null,
    changedIds: [],
    selection: null,
  };
}
