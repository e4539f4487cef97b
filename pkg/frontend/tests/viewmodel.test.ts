/**
 * View-model behavior against a scripted in-memory service. The fake
 * mirrors the wire contract (status codes, error bodies, receipt shapes)
 * so these tests stay honest about what the server returns; fidelity of
 * the real numbers is covered by the end-to-end suite.
 */

import { beforeEach, describe, expect, it } from 'vitest';

import { AnnotationApiClient, ServiceError, type FetchLike } from '../src/client.js';
import { AnnotationSession } from '../src/viewmodel.js';
import type { EvalOutcome, QueueItem } from '../src/types.js';

const ORIGINAL = 'def area(w, h):\n    return w + h';
const FIXED = 'def area(w, h):\n    return w * h';

function levenshtein(a: string, b: string): number {
  const d: number[][] = Array.from({ length: a.length + 1 }, (_, i) =>
    Array.from({ length: b.length + 1 }, (_, j) => (i === 0 ? j : j === 0 ? i : 0)),
  );
  for (let i = 1; i <= a.length; i++) {
    for (let j = 1; j <= b.length; j++) {
      const cost = a[i - 1] === b[j - 1] ? 0 : 1;
      d[i]![j] = Math.min(d[i - 1]![j]! + 1, d[i]![j - 1]! + 1, d[i - 1]![j - 1]! + cost);
    }
  }
  return d[a.length]![b.length]!;
}

function outcomeFor(program: string): EvalOutcome {
  const passed = program.includes('return w * h');
  return {
    passed,
    failure_kind: passed ? null : 'assertion_failure',
    duration: 0.01,
    per_test: [
      { test_index: 0, passed, message: passed ? '' : 'AssertionError' },
      { test_index: 1, passed: true, message: '' },
    ],
  };
}

/** Minimal server: one claimable item, contract-shaped responses. */
function fakeService() {
  const item: QueueItem = {
    task_id: 311,
    status: 'open',
    claimed_by: null,
    failing_programs: [
      {
        task_id: 311,
        program_text: ORIGINAL,
        origin: 'base_model',
        temperature: 0.8,
        index: 0,
        eval: outcomeFor(ORIGINAL),
      },
    ],
  };

  const respond = (body: unknown, status = 200) =>
    new Response(JSON.stringify(body), { status, headers: { 'content-type': 'application/json' } });

  const fetchImpl: FetchLike = async (url, init) => {
    const path = url.replace(/^[a-z]+:\/\/[^/]+/, '');
    const payload = init?.body ? JSON.parse(init.body as string) : {};

    if (path === '/queue') return respond([item]);
    if (path === '/tasks/311')
      return respond({
        task_id: 311,
        description: 'Write a function area(w, h) that returns the rectangle area.',
        prompt_text: '...',
        embedded_test: 'assert area(2, 3) == 6',
        heldout_tests: ['assert area(1, 1) == 1', 'assert area(4, 5) == 20'],
        setup_code: null,
      });
    if (path === '/claim') {
      if (item.status !== 'open')
        return respond({ error: 'conflict', detail: `task 311 is already claimed by ${item.claimed_by}` }, 409);
      item.status = 'claimed';
      item.claimed_by = payload.annotator_id;
      return respond(item);
    }
    if (path === '/run-tests') {
      if (!String(payload.program_text).trim())
        return respond({ error: 'validation', detail: 'program_text must be non-empty' }, 400);
      return respond(outcomeFor(payload.program_text));
    }
    if (path === '/edit-distance') {
      const distance = levenshtein(payload.a, payload.b);
      const longest = Math.max(payload.a.length, payload.b.length);
      return respond({ distance, ratio: longest ? distance / longest : 0 });
    }
    if (path === '/submit') {
      const outcome = outcomeFor(payload.refinement_text);
      const rejected = !outcome.passed;
      item.status = rejected ? 'rejected' : 'submitted';
      return respond({
        task_id: 311,
        status: item.status,
        accepted: rejected ? false : null,
        reason: rejected ? 'test_failure' : null,
        edit_distance: levenshtein(payload.refinement_text, ORIGINAL),
        eval: outcome,
        annotation_seconds: 12.5,
      });
    }
    return respond({ error: 'state', detail: `unhandled ${path}` }, 409);
  };

  return { item, fetchImpl };
}

describe('AnnotationSession', () => {
  let session: AnnotationSession;
  let service: ReturnType<typeof fakeService>;

  beforeEach(async () => {
    service = fakeService();
    session = new AnnotationSession(new AnnotationApiClient('http://svc', service.fetchImpl), 'sam');
    await session.refreshQueue();
  });

  it('claims the next item and loads its task detail', async () => {
    expect(await session.claimNext()).toBe(true);
    expect(session.item?.task_id).toBe(311);
    expect(session.detail?.embedded_test).toBe('assert area(2, 3) == 6');
    expect(session.detail?.heldout_tests).toHaveLength(2);
  });

  it('surfaces a claim conflict as a notice, not an exception', async () => {
    service.item.status = 'claimed';
    service.item.claimed_by = 'alex';
    expect(await session.claimNext(311)).toBe(false);
    expect(session.notices).toEqual([
      { kind: 'conflict', text: 'task 311 is already claimed by alex' },
    ]);
  });

  it('pre-populates the editor with the selected program', async () => {
    await session.claimNext();
    await session.selectProgram(0);
    expect(session.refinementDraft).toBe(ORIGINAL);
    // identical text: the service reports distance 0, ratio 0
    expect(session.gauge.display).toBe('0.000');
    expect(session.gauge.warning).toBe(false);
  });

  it('lists failure kind and length for each candidate program', async () => {
    await session.claimNext();
    expect(session.programChoices()).toEqual([
      { index: 0, failureKind: 'assertion_failure', length: ORIGINAL.length },
    ]);
  });

  it('keeps submit disabled until feedback, selection, and a passing run line up', async () => {
    await session.claimNext();
    expect(session.submitEnabled()).toBe(false);

    session.setFeedback('The function adds the sides; multiply them.');
    expect(session.submitEnabled()).toBe(false); // no program selected

    await session.selectProgram(0);
    expect(session.submitEnabled()).toBe(false); // no test run yet

    await session.setRefinement(FIXED);
    await session.runTests();
    expect(session.submitEnabled()).toBe(true);
  });

  it('disables submit whenever the latest test run failed', async () => {
    await session.claimNext();
    session.setFeedback('Multiply the sides.');
    await session.selectProgram(0);
    const outcome = await session.runTests(); // draft is still the broken original
    expect(outcome.passed).toBe(false);
    expect(session.submitEnabled()).toBe(false);
    // the failing test is identifiable for highlighting
    expect(outcome.per_test.filter((t) => !t.passed)).toHaveLength(1);
  });

  it('invalidates a passing run when the draft changes afterwards', async () => {
    await session.claimNext();
    session.setFeedback('Multiply the sides.');
    await session.selectProgram(0);
    await session.setRefinement(FIXED);
    await session.runTests();
    expect(session.submitEnabled()).toBe(true);

    await session.setRefinement(FIXED + '\n# tweak');
    expect(session.lastRunIsCurrent()).toBe(false);
    expect(session.submitEnabled()).toBe(false);
  });

  it('turns the gauge warning on at ratio 0.5 and above', async () => {
    await session.claimNext();
    await session.selectProgram(0);
    const rewrite = 'import math\n\nzzz = 1\n\nqqq = 2\n\ndef area(w, h):\n    return math.prod([w, h])';
    await session.setRefinement(rewrite);
    expect(session.gauge.ratio).not.toBeNull();
    expect(session.gauge.ratio!).toBeGreaterThanOrEqual(0.5);
    expect(session.gauge.warning).toBe(true);
  });

  it('shows the service rejection reason verbatim', async () => {
    await session.claimNext();
    session.setFeedback('Multiply the sides.');
    await session.selectProgram(0);
    // scripted server: passing run now, but submit re-evaluates a program
    // we sneak back to broken, forcing a rejection receipt
    await session.setRefinement(FIXED);
    await session.runTests();
    session.refinementDraft = ORIGINAL; // bypass setRefinement to keep the stale run
    session['lastRunText'] = ORIGINAL;
    const receipt = await session.submit();
    expect(receipt?.status).toBe('rejected');
    expect(session.notices.at(-1)).toEqual({ kind: 'rejection', text: 'test_failure' });
  });

  it('drops submitted work from the annotator queue view', async () => {
    await session.claimNext();
    session.setFeedback('Multiply the sides.');
    await session.selectProgram(0);
    await session.setRefinement(FIXED);
    await session.runTests();
    expect(session.openWork()).toHaveLength(1);
    const receipt = await session.submit();
    expect(receipt?.status).toBe('submitted');
    expect(receipt?.accepted).toBeNull(); // parked until a reviewer verifies
    expect(session.openWork()).toHaveLength(0);
  });

  it('raises typed errors for http problem bodies', async () => {
    await session.claimNext();
    await expect(session.runTests()).rejects.toThrowError(ServiceError);
    await expect(session.runTests()).rejects.toMatchObject({
      status: 400,
      kind: 'validation',
    });
  });
});
