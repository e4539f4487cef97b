/**
 * Thin typed wrapper over the annotation service HTTP API. All state and
 * all verdicts live on the server; this class only moves JSON.
 */

import type {
  EditDistanceReply,
  EvalOutcome,
  ExportRecord,
  QueueItem,
  ReviewVerdict,
  ServiceProblem,
  SubmitReceipt,
  TaskDetail,
} from './types.js';

export class ServiceError extends Error {
  constructor(
    public readonly status: number,
    public readonly kind: string,
    public readonly detail: string,
  ) {
    super(`${kind}: ${detail}`);
    this.name = 'ServiceError';
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export interface SubmitPayload {
  annotator_id: string;
  task_id: number;
  feedback_text: string;
  refinement_text: string;
  program_index?: number;
  bug_tags?: string[];
  bugs_addressed?: number;
}

export class AnnotationApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = fetch,
  ) {}

  async queue(): Promise<QueueItem[]> {
    return this.request('GET', '/queue');
  }

  async task(taskId: number): Promise<TaskDetail> {
    return this.request('GET', `/tasks/${taskId}`);
  }

  /** Claim a specific task, or the next open one when taskId is omitted. */
  async claim(annotatorId: string, taskId?: number): Promise<QueueItem> {
    const body: Record<string, unknown> = { annotator_id: annotatorId };
    if (taskId !== undefined) body.task_id = taskId;
    return this.request('POST', '/claim', body);
  }

  async release(annotatorId: string, taskId: number): Promise<QueueItem> {
    return this.request('POST', '/release', { annotator_id: annotatorId, task_id: taskId });
  }

  async runTests(taskId: number, programText: string): Promise<EvalOutcome> {
    return this.request('POST', '/run-tests', { task_id: taskId, program_text: programText });
  }

  async editDistance(a: string, b: string): Promise<EditDistanceReply> {
    return this.request('POST', '/edit-distance', { a, b });
  }

  async submit(payload: SubmitPayload): Promise<SubmitReceipt> {
    return this.request('POST', '/submit', payload);
  }

  async reviewVerify(taskId: number, verified: boolean): Promise<ReviewVerdict> {
    return this.request('POST', '/review-verify', { task_id: taskId, verified });
  }

  async exportAccepted(): Promise<ExportRecord[]> {
    return this.request('GET', '/export-accepted');
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = { method, headers: { 'Content-Type': 'application/json' } };
    if (body !== undefined) init.body = JSON.stringify(body);
    const response = await this.fetchImpl(`${this.baseUrl}${path}`, init);
    if (!response.ok) {
      let problem: ServiceProblem;
      try {
        problem = (await response.json()) as ServiceProblem;
      } catch {
        throw new ServiceError(response.status, 'http', response.statusText);
      }
      throw new ServiceError(response.status, problem.error, problem.detail);
    }
    return (await response.json()) as T;
  }
}
