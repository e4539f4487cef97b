/**
 * Session state for one annotator. The server owns every verdict: tests
 * run remotely, the edit-distance gauge shows the service's ratio, and
 * acceptance decisions arrive in receipts. This class tracks drafts,
 * staleness, and which controls are allowed.
 */

import { AnnotationApiClient, ServiceError } from './client.js';
import type {
  EvalOutcome,
  ProgramRecord,
  QueueItem,
  SubmitReceipt,
  TaskDetail,
} from './types.js';

/** Gauge threshold mirroring the acceptance filter's edit-distance bound. */
export const GAUGE_WARNING_RATIO = 0.5;

export interface GaugeState {
  /** Service-computed ratio for (refinement draft, selected program). */
  ratio: number | null;
  distance: number | null;
  /** True at ratio >= 0.5: the filter would reject this much rewriting. */
  warning: boolean;
  /** Ratio formatted for display, 3 decimal places. */
  display: string;
}

export interface Notice {
  kind: 'conflict' | 'rejection' | 'error' | 'info';
  text: string;
}

const EMPTY_GAUGE: GaugeState = { ratio: null, distance: null, warning: false, display: '-' };

export class AnnotationSession {
  queue: QueueItem[] = [];
  item: QueueItem | null = null;
  detail: TaskDetail | null = null;
  selectedIndex: number | null = null;
  feedbackDraft = '';
  refinementDraft = '';
  gauge: GaugeState = EMPTY_GAUGE;
  lastRun: EvalOutcome | null = null;
  receipt: SubmitReceipt | null = null;
  notices: Notice[] = [];

  /** The refinement text the last test run / gauge reading was for. */
  private lastRunText: string | null = null;
  private gaugeText: string | null = null;

  constructor(
    private readonly client: AnnotationApiClient,
    readonly annotatorId: string,
  ) {}

  // -- queue -----------------------------------------------------------

  async refreshQueue(): Promise<void> {
    this.queue = await this.client.queue();
  }

  /** Items this annotator can still act on; submitted work drops out. */
  openWork(): QueueItem[] {
    return this.queue.filter(
      (item) =>
        item.status === 'open' ||
        (item.status === 'claimed' && item.claimed_by === this.annotatorId),
    );
  }

  /**
   * Claim the next open item (or a specific task). Conflicts and an empty
   * queue surface as notices, not exceptions: another annotator getting
   * there first is routine.
   */
  async claimNext(taskId?: number): Promise<boolean> {
    try {
      const item = await this.client.claim(this.annotatorId, taskId);
      await this.openItem(item);
      return true;
    } catch (err) {
      if (err instanceof ServiceError && (err.status === 404 || err.status === 409)) {
        this.notices.push({ kind: 'conflict', text: err.detail });
        return false;
      }
      throw err;
    }
  }

  private async openItem(item: QueueItem): Promise<void> {
    this.item = item;
    this.detail = await this.client.task(item.task_id);
    this.selectedIndex = null;
    this.feedbackDraft = '';
    this.refinementDraft = '';
    this.gauge = EMPTY_GAUGE;
    this.lastRun = null;
    this.lastRunText = null;
    this.gaugeText = null;
    this.receipt = null;
  }

  // -- program selection -------------------------------------------------

  /** Failure kind and length per program, for picking an easy target. */
  programChoices(): { index: number; failureKind: string; length: number }[] {
    if (!this.item) return [];
    return this.item.failing_programs.map((program, index) => ({
      index,
      failureKind: program.eval?.failure_kind ?? 'unknown',
      length: program.program_text.length,
    }));
  }

  selectedProgram(): ProgramRecord | null {
    if (!this.item || this.selectedIndex === null) return null;
    return this.item.failing_programs[this.selectedIndex] ?? null;
  }

  /**
   * Selecting a program pre-populates the editor with its text: the
   * workflow is copy the original, then make the minimum edits.
   */
  async selectProgram(index: number): Promise<void> {
    if (!this.item) throw new Error('no claimed item');
    const program = this.item.failing_programs[index];
    if (!program) throw new Error(`no program at index ${index}`);
    this.selectedIndex = index;
    this.refinementDraft = program.program_text;
    this.lastRun = null;
    this.lastRunText = null;
    await this.refreshGauge();
  }

  // -- drafts ------------------------------------------------------------

  setFeedback(text: string): void {
    this.feedbackDraft = text;
  }

  /** Editing the refinement invalidates the previous test run and gauge. */
  async setRefinement(text: string): Promise<void> {
    this.refinementDraft = text;
    await this.refreshGauge();
  }

  /** Ask the service for the ratio; the UI never computes distance. */
  async refreshGauge(): Promise<void> {
    const program = this.selectedProgram();
    if (!program || !this.refinementDraft) {
      this.gauge = EMPTY_GAUGE;
      this.gaugeText = null;
      return;
    }
    const reply = await this.client.editDistance(this.refinementDraft, program.program_text);
    this.gauge = {
      ratio: reply.ratio,
      distance: reply.distance,
      warning: reply.ratio >= GAUGE_WARNING_RATIO,
      display: reply.ratio.toFixed(3),
    };
    this.gaugeText = this.refinementDraft;
  }

  // -- tests and submission ----------------------------------------------

  async runTests(): Promise<EvalOutcome> {
    if (!this.item) throw new Error('no claimed item');
    const outcome = await this.client.runTests(this.item.task_id, this.refinementDraft);
    this.lastRun = outcome;
    this.lastRunText = this.refinementDraft;
    return outcome;
  }

  /** Test results are current only for the draft they were run against. */
  lastRunIsCurrent(): boolean {
    return this.lastRun !== null && this.lastRunText === this.refinementDraft;
  }

  /**
   * Submit stays disabled until feedback is non-empty, a program is
   * selected, and the latest test run of this exact draft passed.
   */
  submitEnabled(): boolean {
    return (
      this.feedbackDraft.trim().length > 0 &&
      this.selectedIndex !== null &&
      this.lastRunIsCurrent() &&
      this.lastRun!.passed
    );
  }

  async submit(bugTags?: string[]): Promise<SubmitReceipt | null> {
    if (!this.item || this.selectedIndex === null) throw new Error('no claimed item');
    if (!this.submitEnabled()) throw new Error('submit is disabled');
    try {
      const receipt = await this.client.submit({
        annotator_id: this.annotatorId,
        task_id: this.item.task_id,
        feedback_text: this.feedbackDraft,
        refinement_text: this.refinementDraft,
        program_index: this.selectedIndex,
        bug_tags: bugTags,
      });
      this.receipt = receipt;
      if (receipt.status === 'rejected' && receipt.reason) {
        // show the service's reason verbatim; no local interpretation
        this.notices.push({ kind: 'rejection', text: receipt.reason });
      }
      await this.refreshQueue();
      return receipt;
    } catch (err) {
      if (err instanceof ServiceError) {
        this.notices.push({ kind: 'error', text: err.detail });
        return null;
      }
      throw err;
    }
  }
}
