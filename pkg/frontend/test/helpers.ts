import { readFileSync } from 'node:fs';
import { fileURLToPath } from 'node:url';
import { dirname, join } from 'node:path';

const here = dirname(fileURLToPath(import.meta.url));
export const fixtures = JSON.parse(
  readFileSync(join(here, 'fixtures', 'fixtures.json'), 'utf-8'),
);

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

/**
 * In-memory /v1 server backed by fixtures recorded from the real
 * mock-provider service. It tracks just enough state (session pointer,
 * pending job, which storyboard snapshot is current) for the UI flows
 * under test.
 */
export class FakeServer {
  session: string | null = null;
  jobPollsRemaining = 1;
  board: any = fixtures.storyboard;
  requests: { method: string; path: string; body?: any }[] = [];
  private jobId: string | null = null;

  readonly fetch: FetchLike = async (input, init) => {
    const method = init?.method ?? 'GET';
    const path = String(input);
    const body = init?.body ? JSON.parse(String(init.body)) : undefined;
    this.requests.push({ method, path, body });
    return this.route(method, path, body);
  };

  private json(data: unknown, status = 200): Response {
    return new Response(JSON.stringify(data), {
      status,
      headers: { 'Content-Type': 'application/json' },
    });
  }

  private route(method: string, path: string, body: any): Response {
    const pid = fixtures.project_id;
    if (path === '/v1/ideas') return this.json(fixtures.ideas);
    if (path === '/v1/session') return this.json({ current_project: this.session });
    if (path === '/v1/projects' && method === 'POST') {
      if (!body?.seed_text?.trim() && !body?.suggestion_id) {
        return this.json({ code: 'validation_error', message: 'seed required' }, 422);
      }
      this.jobId = 'job-1';
      return this.json({ job_id: this.jobId });
    }
    if (path === `/v1/jobs/${this.jobId}`) {
      if (this.jobPollsRemaining-- > 0) {
        return this.json({ job_id: this.jobId, status: 'running', project_id: null, error: null });
      }
      this.session = pid;
      return this.json({ job_id: this.jobId, status: 'done', project_id: pid, error: null });
    }
    if (path === `/v1/projects/${pid}`) return this.json(fixtures.project);
    if (path === `/v1/projects/${pid}/storyboard`) return this.json(this.board);
    if (path === `/v1/projects/${pid}/components/storyline`) {
      return this.json(fixtures.storyline);
    }
    const scene = path.match(new RegExp(`^/v1/projects/${pid}/components/scene/(\\d)$`));
    if (scene) return this.json(fixtures.scenes[scene[1]]);
    if (path === `/v1/projects/${pid}/revise` && method === 'POST') {
      if (!body?.instruction?.trim()) {
        return this.json({ code: 'empty_instruction', message: 'instruction is empty' }, 422);
      }
      this.board = fixtures.storyboard_after_revise;
      return this.json(fixtures.revise);
    }
    if (path === `/v1/projects/${pid}/regenerate-stale` && method === 'POST') {
      this.board = fixtures.storyboard_after_regen;
      return this.json(fixtures.regenerate_stale);
    }
    if (path === `/v1/projects/${pid}/undo` && method === 'POST') {
      this.board = fixtures.storyboard;
      return this.json(fixtures.undo);
    }
    if (path === `/v1/projects/${pid}/start-over` && method === 'POST') {
      this.session = null;
      return this.json({ archived: pid, current_project: null });
    }
    if (path.match(new RegExp(`^/v1/projects/${pid}/scenes/(\\d)/regenerate$`))) {
      return this.json({ revision: {}, scene: fixtures.scenes['1'] });
    }
    return this.json({ code: 'project_not_found', message: `no route ${path}` }, 404);
  }
}

export function flush(): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, 0));
}
