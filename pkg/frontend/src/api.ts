// Thin client for the scene service. Every call returns the parsed JSON body
// or throws ApiError carrying the server's machine-readable error document.

import type {
  ChangeDoc,
  GraphDoc,
  SceneDoc,
  ServiceErrorDoc,
  VocabDoc,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public status: number,
    public detail: ServiceErrorDoc,
  ) {
    super(detail.message);
  }
}

async function request<T>(url: string, init?: RequestInit): Promise<T> {
  const resp = await fetch(url, init);
  const body = await resp.json().catch(() => ({ code: "bad-json", message: "unparseable response" }));
  if (!resp.ok) {
    throw new ApiError(resp.status, body as ServiceErrorDoc);
  }
  return body as T;
}

function post<T>(url: string, payload: unknown): Promise<T> {
  return request<T>(url, {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify(payload),
  });
}

export class StudioApi {
  constructor(public baseUrl: string) {}

  health(): Promise<{ status: string }> {
    return request(`${this.baseUrl}/health`);
  }

  vocab(): Promise<VocabDoc> {
    return request(`${this.baseUrl}/vocab`);
  }

  validate(graph: GraphDoc): Promise<{ valid: boolean }> {
    return post(`${this.baseUrl}/validate`, { graph });
  }

  generate(graph: GraphDoc, seed: number): Promise<{ scene: SceneDoc }> {
    return post(`${this.baseUrl}/generate`, { graph, seed });
  }

  manipulate(
    graph: GraphDoc,
    scene: SceneDoc,
    change: ChangeDoc,
    seed: number,
  ): Promise<{ scene: SceneDoc; changed_ids: number[] }> {
    return post(`${this.baseUrl}/manipulate`, { graph, scene, change, seed });
  }
}
