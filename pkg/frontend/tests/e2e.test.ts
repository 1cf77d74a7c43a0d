/** End-to-end: a scripted rater session against the real study service.
 *
 * Boots uvicorn with a seeded 50-item study (10 real + 10 per model), drives
 * the session state machine through all 50 items via the keyboard mapping,
 * then checks that (a) the report for the scripted session exactly matches a
 * direct-API replay of the same labels and (b) no captured network traffic
 * contains source-model information.
 */

import { ChildProcess, execFileSync, spawn } from 'node:child_process';
import { mkdtempSync, rmSync } from 'node:fs';
import { tmpdir } from 'node:os';
import { join } from 'node:path';
import { afterAll, beforeAll, describe, expect, it } from 'vitest';

import { StudyApiClient } from '../src/api.js';
import { labelForKey } from '../src/keyboard.js';
import { RaterSession } from '../src/session.js';
import { RatingLabel } from '../src/types.js';

const PORT = 8765;
const BASE = `http://127.0.0.1:${PORT}`;
const MODELS = ['dcgan', 'stylegan', 'pg_stylegan', 'stylegan2'];

let server: ChildProcess;
let workDir: string;
let studyId: string;

/** Every request/response the scripted session produces, for the leak scan. */
const traffic: string[] = [];
const capturingFetch = async (url: string, init?: RequestInit): Promise<Response> => {
  traffic.push(url);
  if (init?.body) traffic.push(String(init.body));
  const resp = await fetch(url, init);
  const copy = resp.clone();
  const type = copy.headers.get('content-type') ?? '';
  traffic.push(type.includes('json') || type.includes('text') ? await copy.text() : `<binary ${type}>`);
  return resp;
};

function seedImageDirs(root: string): void {
  const script = [
    'import sys, numpy as np',
    'from pathlib import Path',
    'from wbganlab.io_utils import save_png',
    'root = Path(sys.argv[1])',
    'rng = np.random.default_rng(0)',
    `for name in ['real'] + ${JSON.stringify(MODELS)}:`,
    '    d = root / name; d.mkdir(parents=True)',
    '    for i in range(12):',
    "        save_png(rng.random((40, 16)), d / f'{i}.png')",
  ].join('\n');
  execFileSync('python3', ['-c', script, root]);
}

async function waitForServer(): Promise<void> {
  for (let i = 0; i < 100; i++) {
    try {
      const resp = await fetch(`${BASE}/docs`);
      if (resp.ok) return;
    } catch {
      /* not up yet */
    }
    await new Promise((r) => setTimeout(r, 200));
  }
  throw new Error('study service did not come up');
}

beforeAll(async () => {
  workDir = mkdtempSync(join(tmpdir(), 'rater-e2e-'));
  seedImageDirs(workDir);
  server = spawn('python3', ['-m', 'uvicorn', '--factory', 'wbganlab.service:create_app', '--port', String(PORT)], {
    env: { ...process.env, WBGANLAB_STUDY_ROOT: join(workDir, 'studies') },
    stdio: 'ignore',
  });
  await waitForServer();

  const fakeDirs = Object.fromEntries(MODELS.map((m) => [m, join(workDir, m)]));
  const resp = await fetch(`${BASE}/studies`, {
    method: 'POST',
    headers: { 'content-type': 'application/json' },
    body: JSON.stringify({ real_dir: join(workDir, 'real'), fake_dirs: fakeDirs, seed: 7 }),
  });
  const body = await resp.json();
  expect(body.n_items).toBe(50);
  studyId = body.study_id;
}, 60_000);

afterAll(() => {
  server?.kill();
  rmSync(workDir, { recursive: true, force: true });
});

describe('scripted rater session', () => {
  const labels: { itemId: string; label: RatingLabel }[] = [];

  it('completes the seeded 50-item study via keyboard-driven ratings', async () => {
    const api = new StudyApiClient(BASE, capturingFetch);
    // the preloader stands in for the browser's Image fetch, so image
    // responses are part of the captured traffic too
    const session = new RaterSession(api, studyId, 'ui-rater', (url) => void capturingFetch(url));
    let state = await session.fetchNext();
    expect(state.progress).toEqual({ rated: 0, total: 50 });

    let guard = 0;
    while (!state.finished && guard++ < 60) {
      // alternate R / F keystrokes, as a rater at the keyboard would
      const key = labels.length % 2 === 0 ? 'r' : 'f';
      const label = labelForKey(key)!;
      labels.push({ itemId: state.itemId!, label });
      state = (await session.submit(label))!;
      expect(state.error).toBeNull();
    }
    expect(state.finished).toBe(true);
    expect(state.progress).toEqual({ rated: 50, total: 50 });
    expect(new Set(labels.map((l) => l.itemId)).size).toBe(50);
  }, 60_000);

  it('report matches a direct-API replay of the same labels', async () => {
    for (const { itemId, label } of labels) {
      const resp = await fetch(`${BASE}/studies/${studyId}/ratings`, {
        method: 'POST',
        headers: { 'content-type': 'application/json' },
        body: JSON.stringify({ rater_id: 'api-rater', item_id: itemId, label }),
      });
      expect(resp.status).toBe(200);
    }
    const report = await (await fetch(`${BASE}/studies/${studyId}/report`)).json();
    expect(report.complete).toBe(true);
    expect(report.per_rater['ui-rater']).toEqual(report.per_rater['api-rater']);
    expect(report.per_rater['ui-rater'].n_ratings).toBe(50);
  }, 60_000);

  it('captured traffic contains no source-model information', () => {
    expect(traffic.length).toBeGreaterThan(100);
    const joined = traffic.join('\n').toLowerCase();
    expect(joined).not.toContain('hidden_source');
    expect(joined).not.toContain('"source"');
    for (const model of MODELS) {
      expect(joined).not.toContain(model);
    }
  });
});
