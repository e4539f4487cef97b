/**
 * Wire types for the annotation service. Field names match the service
 * JSON verbatim (snake_case), so records pass through untranslated.
 */

export type FailureKind =
  | 'assertion_failure'
  | 'runtime_error'
  | 'timeout'
  | 'resource_limit'
  | 'harness_error';

export interface TestResult {
  test_index: number;
  passed: boolean;
  message: string;
}

export interface EvalOutcome {
  passed: boolean;
  failure_kind: FailureKind | null;
  duration: number;
  per_test: TestResult[];
}

export interface ProgramRecord {
  task_id: number;
  program_text: string;
  origin: string;
  temperature: number;
  index: number;
  eval: EvalOutcome | null;
}

export type ItemStatus = 'open' | 'claimed' | 'submitted' | 'accepted' | 'rejected';

export interface QueueItem {
  task_id: number;
  failing_programs: ProgramRecord[];
  status: ItemStatus;
  claimed_by: string | null;
}

export interface TaskDetail {
  task_id: number;
  description: string;
  prompt_text: string;
  embedded_test: string;
  heldout_tests: string[];
  setup_code: string | null;
}

export interface EditDistanceReply {
  distance: number;
  ratio: number;
}

export type RejectReason = 'test_failure' | 'unverified' | 'edit_distance';

export interface SubmitReceipt {
  task_id: number;
  status: ItemStatus;
  accepted: boolean | null;
  reason: RejectReason | null;
  edit_distance: number;
  eval: EvalOutcome;
  annotation_seconds: number;
}

export interface ReviewVerdict {
  accepted: boolean;
  reason: RejectReason | null;
  status: ItemStatus;
}

export interface ExportRecord {
  task_id: number;
  feedback_text: string;
  refinement_text: string | null;
  edit_distance: number | null;
  [key: string]: unknown;
}

/** Error body the service returns alongside 400/404/409 statuses. */
export interface ServiceProblem {
  error: string;
  detail: string;
}
