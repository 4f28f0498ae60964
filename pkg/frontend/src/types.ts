// Document shapes exchanged with the scene service. These mirror the JSON
// schemas of the backend exactly; the studio never invents its own formats.

export interface VocabDoc {
  objects: string[];
  predicates: string[];
}

export interface GraphNodeDoc {
  id: number;
  category: string;
}

export interface GraphEdgeDoc {
  src: number;
  dst: number;
  predicate: string;
}

export interface GraphDoc {
  vocab?: string;
  objects: GraphNodeDoc[];
  edges: GraphEdgeDoc[];
}

export interface BoxDoc {
  w: number;
  l: number;
  h: number;
  cx: number;
  cy: number;
  cz: number;
  alpha_deg: number;
}

export interface SceneObjectDoc {
  id: number;
  category: string;
  box: BoxDoc;
  shape_code?: number[];
  points?: number[][];
}

export interface SceneDoc {
  objects: SceneObjectDoc[];
}

export interface ChangeDoc {
  added_nodes: GraphNodeDoc[];
  added_edges: GraphEdgeDoc[];
  relabeled_edges: { edge: number; predicate: string }[];
}

export interface ValidationViolation {
  kind: string;
  where: string;
  message: string;
}

export interface ServiceErrorDoc {
  code: string;
  message: string;
  report?: ValidationViolation[];
}

export const emptyChange = (): ChangeDoc => ({
  added_nodes: [],
  added_edges: [],
  relabeled_edges: [],
});
