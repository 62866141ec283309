/**
 * Typed client for the storycomposer /v1 API.
 *
 * Every method maps to one endpoint; nothing here touches the DOM, so the
 * client can be exercised directly in tests with a stubbed fetch.
 */

export interface IdeaSuggestion {
  id: string;
  text: string;
}

export interface Span {
  entity_id: string;
  kind: 'persona' | 'location';
  name: string;
  field: string;
  start: number;
  end: number;
}

export interface ComponentOut {
  ref: string;
  kind: string;
  data: Record<string, any>;
  refs: Span[];
}

export interface StoryboardTile {
  index: number;
  narration: string;
  image_prompt: string;
  image_handle: string | null;
  stale: boolean;
  tones: string[];
}

export interface Storyboard {
  project_id: string;
  grid: string;
  storyline_out_of_sync: boolean;
  scenes: StoryboardTile[];
}

export interface JobInfo {
  job_id: string;
  status: 'pending' | 'running' | 'done' | 'error';
  project_id: string | null;
  error: { code: string; message: string } | null;
}

export interface ReviseResult {
  revision: Record<string, any>;
  propagation: {
    dirty_scenes: number[];
    images_invalidated: number[];
    storyline_touched: boolean;
  };
  changed_components: ComponentOut[];
}

export interface Project {
  id: string;
  status: string;
  seed: { text: string; origin: string };
  storyline: { text: string; tones: { label: string }[] } | null;
  personas: { id: { value: string }; name: string }[];
  locations: { id: { value: string }; name: string }[];
  scenes: Record<string, any>[];
}

export class ApiError extends Error {
  constructor(
    public code: string,
    message: string,
    public status: number,
  ) {
    super(message);
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class Client {
  constructor(
    private baseUrl = '',
    private fetchFn: FetchLike = (...args) => fetch(...args),
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const res = await this.fetchFn(`${this.baseUrl}/v1${path}`, {
      method,
      headers: body !== undefined ? { 'Content-Type': 'application/json' } : undefined,
      body: body !== undefined ? JSON.stringify(body) : undefined,
    });
    const data = await res.json();
    if (!res.ok) {
      throw new ApiError(data.code ?? 'http_error', data.message ?? res.statusText, res.status);
    }
    return data as T;
  }

  ideas(): Promise<{ ideas: IdeaSuggestion[] }> {
    return this.request('GET', '/ideas');
  }

  createProject(body: { seed_text?: string; suggestion_id?: string }): Promise<{ job_id: string }> {
    return this.request('POST', '/projects', body);
  }

  job(jobId: string): Promise<JobInfo> {
    return this.request('GET', `/jobs/${jobId}`);
  }

  /** Poll a creation job until it settles; resolves with the project id. */
  waitForProject(jobId: string, intervalMs = 500): Promise<string> {
    return new Promise((resolve, reject) => {
      const tick = async () => {
        let job: JobInfo;
        try {
          job = await this.job(jobId);
        } catch (err) {
          clearInterval(timer);
          reject(err);
          return;
        }
        if (job.status === 'done' && job.project_id) {
          clearInterval(timer);
          resolve(job.project_id);
        } else if (job.status === 'error') {
          clearInterval(timer);
          reject(new ApiError(job.error?.code ?? 'generation_failed', job.error?.message ?? 'generation failed', 502));
        }
      };
      const timer = setInterval(tick, intervalMs);
      void tick();
    });
  }

  session(): Promise<{ current_project: string | null }> {
    return this.request('GET', '/session');
  }

  project(id: string): Promise<Project> {
    return this.request('GET', `/projects/${id}`);
  }

  storyboard(id: string): Promise<Storyboard> {
    return this.request('GET', `/projects/${id}/storyboard`);
  }

  component(id: string, ref: string): Promise<ComponentOut> {
    return this.request('GET', `/projects/${id}/components/${ref}`);
  }

  revise(id: string, target: string, instruction: string): Promise<ReviseResult> {
    return this.request('POST', `/projects/${id}/revise`, { target, instruction });
  }

  regenerateScene(id: string, index: number): Promise<{ scene: ComponentOut }> {
    return this.request('POST', `/projects/${id}/scenes/${index}/regenerate`);
  }

  regenerateStale(id: string): Promise<{ regenerated: number[] }> {
    return this.request('POST', `/projects/${id}/regenerate-stale`);
  }

  undo(id: string): Promise<{ revision: Record<string, any> }> {
    return this.request('POST', `/projects/${id}/undo`);
  }

  startOver(id: string): Promise<{ archived: string }> {
    return this.request('POST', `/projects/${id}/start-over`);
  }
}
