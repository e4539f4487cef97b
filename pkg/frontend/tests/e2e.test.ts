/**
 * End-to-end checks against a real annotation service. The suite samples
 * a small run with the pipeline CLI, serves its failing train split over
 * HTTP, drives a scripted annotation session through the view model, and
 * finally feeds the service export back into the collect-feedback stage.
 *
 * Two behaviors carry the weight here:
 *  - the gauge shows exactly the service-computed edit-distance ratio,
 *    to three decimal places, across ten scripted edit sequences, and
 *    submit stays disabled whenever the latest test run failed;
 *  - a full claim / refine / submit / verify / export session produces
 *    an export that collect-feedback ingests as exactly one annotation.
 */

import { type ChildProcess, spawn, spawnSync } from 'node:child_process';
import { mkdtempSync, readFileSync, rmSync, writeFileSync } from 'node:fs';
import { tmpdir } from 'node:os';
import { dirname, join, resolve } from 'node:path';
import { fileURLToPath } from 'node:url';
import { afterAll, beforeAll, describe, expect, it } from 'vitest';

import { AnnotationApiClient } from '../src/client.js';
import { AnnotationSession } from '../src/viewmodel.js';

const REPO_ROOT = resolve(dirname(fileURLToPath(import.meta.url)), '..', '..');
const PORT = 8473;
const BASE_URL = `http://127.0.0.1:${PORT}`;

const TASK_ID = 311;
const GOLD = `def solve${TASK_ID}(n):\n    return n + ${TASK_ID}`;
const FEEDBACK = `Replace the minus with a plus in solve${TASK_ID}.`;

let workDir: string;
let runDir: string;
let configPath: string;
let server: ChildProcess | null = null;
let serverLog = '';

function python(args: string[]): { status: number | null; stdout: string; stderr: string } {
  const result = spawnSync('python3', args, { cwd: REPO_ROOT, encoding: 'utf8', timeout: 240_000 });
  return { status: result.status, stdout: result.stdout ?? '', stderr: result.stderr ?? '' };
}

/** Build the corpus, write config.json, and run the sampling stage. */
function prepareRun(): void {
  const script = `
import sys
from pathlib import Path

sys.path.insert(0, ${JSON.stringify(join(REPO_ROOT, 'tests'))})
from synthetic import make_corpus, registry_spec, small_config

from ilf.cli import main
from ilf.records import write_json
from ilf.tasks import save_dataset

work = Path(${JSON.stringify(workDir)})
corpus = make_corpus(train_ids=(311, 312, 313), test_ids=(11,), refine_ids=(111,))
dataset = work / "tasks.jsonl"
save_dataset(corpus, dataset)
write_json(
    work / "config.json",
    {
        "run": small_config(samples_per_task=4).to_record(),
        "dataset": str(dataset),
        "backends": registry_spec(corpus, test_ids=(11,)),
    },
)
raise SystemExit(main(["sample", "--run-dir", str(work / "run"), "--config", str(work / "config.json")]))
`;
  const result = python(['-c', script]);
  if (result.status !== 0) {
    throw new Error(`sampling stage failed (rc=${result.status}):\n${result.stderr}`);
  }
}

async function waitForServer(): Promise<void> {
  const deadline = Date.now() + 60_000;
  while (Date.now() < deadline) {
    if (server?.exitCode !== null) {
      throw new Error(`server exited early (rc=${server?.exitCode}):\n${serverLog}`);
    }
    try {
      const response = await fetch(`${BASE_URL}/queue`);
      if (response.ok) return;
    } catch {
      // not listening yet
    }
    await new Promise((tick) => setTimeout(tick, 200));
  }
  throw new Error(`server never became ready:\n${serverLog}`);
}

beforeAll(async () => {
  workDir = mkdtempSync(join(tmpdir(), 'ilf-ui-e2e-'));
  runDir = join(workDir, 'run');
  configPath = join(workDir, 'config.json');
  prepareRun();

  server = spawn(
    'python3',
    ['-m', 'ilf', 'serve', '--run-dir', runDir, '--split', 'train', '--port', String(PORT)],
    { cwd: REPO_ROOT, stdio: ['ignore', 'pipe', 'pipe'] },
  );
  server.stdout?.on('data', (chunk: Buffer) => (serverLog += chunk.toString()));
  server.stderr?.on('data', (chunk: Buffer) => (serverLog += chunk.toString()));
  await waitForServer();
}, 240_000);

afterAll(async () => {
  if (server && server.exitCode === null) {
    server.kill('SIGTERM');
    await new Promise<void>((done) => {
      const fallback = setTimeout(() => {
        server?.kill('SIGKILL');
        done();
      }, 5_000);
      server?.once('exit', () => {
        clearTimeout(fallback);
        done();
      });
    });
  }
  rmSync(workDir, { recursive: true, force: true });
});

describe('annotation service end to end', () => {
  const client = new AnnotationApiClient(BASE_URL);
  const session = new AnnotationSession(client, 'sam');
  let baseProgram = '';

  it('serves the failing train samples as an open queue', async () => {
    await session.refreshQueue();
    expect(session.queue.map((item) => item.task_id)).toEqual([311, 312, 313]);
    for (const item of session.queue) {
      expect(item.status).toBe('open');
      expect(item.failing_programs.length).toBeGreaterThan(0);
      for (const program of item.failing_programs) {
        expect(program.eval?.passed).toBe(false);
      }
    }
  });

  it('claims a task and pre-populates the editor', async () => {
    expect(await session.claimNext()).toBe(true);
    expect(session.item?.task_id).toBe(TASK_ID);
    expect(session.detail?.description).toContain(`solve${TASK_ID}`);
    await session.selectProgram(0);
    baseProgram = session.selectedProgram()!.program_text;
    expect(session.refinementDraft).toBe(baseProgram);
    expect(session.gauge.display).toBe('0.000');
  });

  it(
    'gauge matches the service ratio to 3 decimals across ten scripted edit sequences',
    async () => {
      const sequences: { name: string; text: string }[] = [
        { name: 'untouched', text: baseProgram },
        { name: 'sign fixed', text: baseProgram.replace(' - ', ' + ') },
        { name: 'comment appended', text: `${baseProgram}\n# reviewed` },
        { name: 'docstring added', text: `"""Patched solution."""\n${baseProgram}` },
        { name: 'spacing widened', text: baseProgram.replace('return', 'return  ') },
        { name: 'half deleted', text: baseProgram.slice(0, Math.floor(baseProgram.length / 2)) },
        { name: 'body duplicated', text: `${baseProgram}\n${baseProgram}` },
        { name: 'wholesale rewrite', text: 'import math\n\n\ndef unrelated_shape():\n    return math.pi' },
        { name: 'blank lines inserted', text: baseProgram.replace('\n', '\n\n\n') },
        { name: 'marker appended', text: `${baseProgram}\n# delta check` },
      ];
      expect(sequences).toHaveLength(10);
      session.setFeedback(FEEDBACK);

      for (const sequence of sequences) {
        await session.setRefinement(sequence.text);

        // independent reading of the same pair straight from the service
        const reference = await client.editDistance(sequence.text, baseProgram);
        expect(session.gauge.display, sequence.name).toBe(reference.ratio.toFixed(3));
        expect(
          Math.abs(Number(session.gauge.display) - reference.ratio),
          sequence.name,
        ).toBeLessThanOrEqual(0.0005);
        expect(session.gauge.warning, sequence.name).toBe(reference.ratio >= 0.5);

        // submit must be disabled whenever the latest test run failed
        const outcome = await session.runTests();
        expect(session.submitEnabled(), sequence.name).toBe(outcome.passed);
        if (!outcome.passed) {
          expect(session.submitEnabled(), sequence.name).toBe(false);
        }
      }

      const rewrite = await client.editDistance(sequences[7]!.text, baseProgram);
      expect(rewrite.ratio).toBeGreaterThanOrEqual(0.5);
    },
    180_000,
  );

  it('walks a scripted session from claim to verified export', async () => {
    await session.setRefinement(GOLD);
    const outcome = await session.runTests();
    expect(outcome.passed).toBe(true);
    expect(session.submitEnabled()).toBe(true);

    const receipt = await session.submit();
    expect(receipt?.status).toBe('submitted');
    expect(receipt?.accepted).toBeNull();
    expect(receipt?.eval.passed).toBe(true);

    const verdict = await client.reviewVerify(TASK_ID, true);
    expect(verdict.accepted).toBe(true);
    expect(verdict.status).toBe('accepted');

    const records = await client.exportAccepted();
    expect(records).toHaveLength(1);
    expect(records[0]!.task_id).toBe(TASK_ID);
    expect(records[0]!.feedback_text).toBe(FEEDBACK);
    expect(records[0]!.refinement_text).toBe(GOLD);

    const exportPath = join(workDir, 'export.jsonl');
    writeFileSync(exportPath, records.map((record) => JSON.stringify(record)).join('\n') + '\n');

    const ingest = python([
      '-m',
      'ilf',
      'collect-feedback',
      '--run-dir',
      runDir,
      '--config',
      configPath,
      '--source',
      'export',
      '--export',
      exportPath,
    ]);
    expect(ingest.status, ingest.stderr).toBe(0);
    const lines = ingest.stdout.trim().split('\n');
    const summary = JSON.parse(lines[lines.length - 1]!);
    expect(summary.annotated).toBe(1);
    expect(summary.pending).toEqual([312, 313]);

    // the stage ingested exactly the annotation this session submitted
    const stored = readFileSync(join(runDir, 'annotations.jsonl'), 'utf8')
      .trim()
      .split('\n')
      .map((line) => JSON.parse(line));
    expect(stored).toHaveLength(1);
    expect(stored[0].task_id).toBe(TASK_ID);
    expect(stored[0].feedback_text).toBe(FEEDBACK);
    expect(stored[0].target_program.program_text).toBe(baseProgram);
  }, 120_000);
});
