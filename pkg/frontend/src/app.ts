import { ApiError, Client } from './api.js';
import type { ComponentOut, Storyboard } from './api.js';
import { annotateText } from './annotate.js';

/**
 * Single-page client over the /v1 API.
 *
 * Screens: a seed screen (free text plus a 2x2 grid of AI suggestions), the
 * 3x2 storyboard, a storyline editor, persona and location editors, and a
 * scene carousel. Every post-seed screen carries the same six-button
 * navigation bar, and every editable component gets its own chat box.
 */
export class App {
  private projectId: string | null = null;

  constructor(
    private root: HTMLElement,
    private client: Client,
    private doc: Document = root.ownerDocument,
  ) {}

  /** Resume the stored session if there is one, else show the seed screen. */
  async start(): Promise<void> {
    const session = await this.client.session();
    if (session.current_project) {
      this.projectId = session.current_project;
      await this.showStoryboard();
    } else {
      await this.showSeedScreen();
    }
  }

  private el<K extends keyof HTMLElementTagNameMap>(
    tag: K,
    className?: string,
    text?: string,
  ): HTMLElementTagNameMap[K] {
    const node = this.doc.createElement(tag);
    if (className) node.className = className;
    if (text !== undefined) node.textContent = text;
    return node;
  }

  private clear(screen: string): HTMLElement {
    this.root.innerHTML = '';
    this.root.dataset.screen = screen;
    return this.root;
  }

  private showError(err: unknown): void {
    const banner = this.el('div', 'error-banner');
    banner.textContent =
      err instanceof ApiError ? `${err.code}: ${err.message}` : String(err);
    this.root.prepend(banner);
  }

  // -- seed screen -----------------------------------------------------------

  async showSeedScreen(): Promise<void> {
    const root = this.clear('seed');
    root.appendChild(this.el('h1', undefined, 'Start a story'));

    const input = this.el('textarea', 'seed-input');
    input.placeholder = 'Describe your story idea...';
    root.appendChild(input);

    const go = this.el('button', 'create-button', 'Create story');
    go.addEventListener('click', () => void this.createFrom({ seed_text: input.value }));
    root.appendChild(go);

    const grid = this.el('div', 'suggestion-grid grid-2x2');
    root.appendChild(grid);
    const { ideas } = await this.client.ideas();
    for (const idea of ideas) {
      const tile = this.el('button', 'suggestion', idea.text);
      tile.dataset.suggestionId = idea.id;
      tile.addEventListener('click', () => void this.createFrom({ suggestion_id: idea.id }));
      grid.appendChild(tile);
    }
  }

  private async createFrom(body: { seed_text?: string; suggestion_id?: string }): Promise<void> {
    const root = this.clear('creating');
    root.appendChild(this.el('p', 'progress', 'Composing your story...'));
    try {
      const { job_id } = await this.client.createProject(body);
      this.projectId = await this.client.waitForProject(job_id, 50);
      await this.showStoryboard();
    } catch (err) {
      await this.showSeedScreen();
      this.showError(err);
    }
  }

  // -- shared chrome ---------------------------------------------------------

  private navBar(): HTMLElement {
    const nav = this.el('nav', 'nav-bar');
    const entries: [string, () => Promise<void>][] = [
      ['Storyboard', () => this.showStoryboard()],
      ['Storyline', () => this.showStoryline()],
      ['Personas', () => this.showEntities('persona')],
      ['Locations', () => this.showEntities('location')],
      ['Scenes', () => this.showScene(1)],
      ['Start Over', () => this.startOver()],
    ];
    for (const [label, action] of entries) {
      const button = this.el('button', 'nav-button', label);
      button.addEventListener('click', () => void action().catch((e) => this.showError(e)));
      nav.appendChild(button);
    }
    return nav;
  }

  private chatBox(target: string, onDone: () => Promise<void>): HTMLElement {
    const form = this.el('form', 'chat-box');
    form.dataset.target = target;
    const input = this.el('input', 'chat-input');
    input.placeholder = 'Describe a change...';
    const send = this.el('button', 'chat-send', 'Send');
    send.type = 'submit';
    form.append(input, send);
    form.addEventListener('submit', (event) => {
      event.preventDefault();
      void this.client
        .revise(this.projectId!, target, input.value)
        .then(onDone)
        .catch((e) => this.showError(e));
    });
    return form;
  }

  private async startOver(): Promise<void> {
    await this.client.startOver(this.projectId!);
    this.projectId = null;
    await this.showSeedScreen();
  }

  // -- storyboard ------------------------------------------------------------

  async showStoryboard(): Promise<void> {
    const board: Storyboard = await this.client.storyboard(this.projectId!);
    const root = this.clear('storyboard');
    root.appendChild(this.navBar());
    root.appendChild(this.el('h1', undefined, 'Storyboard'));
    if (board.storyline_out_of_sync) {
      root.appendChild(
        this.el('p', 'out-of-sync-warning', 'Storyline was edited; scenes may be out of sync.'),
      );
    }
    const grid = this.el('div', `storyboard-grid grid-${board.grid}`);
    for (const tile of board.scenes) {
      const cell = this.el('div', 'scene-tile');
      cell.dataset.sceneIndex = String(tile.index);
      const heading = this.el('h3', undefined, `Scene ${tile.index}`);
      if (tile.stale) {
        heading.appendChild(this.el('span', 'stale-badge', 'stale'));
      }
      const image = this.el('div', 'scene-image');
      image.dataset.handle = tile.image_handle ?? '';
      cell.append(heading, image, this.el('p', 'narration', tile.narration));
      cell.addEventListener('click', () => void this.showScene(tile.index));
      grid.appendChild(cell);
    }
    root.appendChild(grid);

    const regen = this.el('button', 'regenerate-stale', 'Regenerate stale scenes');
    regen.addEventListener('click', () =>
      void this.client
        .regenerateStale(this.projectId!)
        .then(() => this.showStoryboard())
        .catch((e) => this.showError(e)),
    );
    root.appendChild(regen);
    root.appendChild(this.undoButton(() => this.showStoryboard()));
  }

  private undoButton(onDone: () => Promise<void>): HTMLElement {
    const button = this.el('button', 'undo-button', 'Undo');
    button.addEventListener('click', () =>
      void this.client
        .undo(this.projectId!)
        .then(onDone)
        .catch((e) => this.showError(e)),
    );
    return button;
  }

  // -- storyline -------------------------------------------------------------

  async showStoryline(): Promise<void> {
    const component = await this.client.component(this.projectId!, 'storyline');
    const root = this.clear('storyline');
    root.appendChild(this.navBar());
    root.appendChild(this.el('h1', undefined, 'Storyline'));
    const text = this.el('p', 'storyline-text');
    text.appendChild(annotateText(this.doc, component.data.text, component.refs, 'text'));
    root.appendChild(text);
    const tones = this.el('ul', 'tone-list');
    for (const tone of component.data.tones ?? []) {
      tones.appendChild(this.el('li', 'tone', tone.label));
    }
    root.appendChild(tones);
    root.appendChild(this.chatBox('storyline', () => this.showStoryline()));
  }

  // -- personas and locations --------------------------------------------------

  async showEntities(kind: 'persona' | 'location'): Promise<void> {
    const project = await this.client.project(this.projectId!);
    const root = this.clear(`${kind}s`);
    root.appendChild(this.navBar());
    root.appendChild(this.el('h1', undefined, kind === 'persona' ? 'Personas' : 'Locations'));
    const entities = kind === 'persona' ? project.personas : project.locations;
    for (const entity of entities) {
      const ref = `${kind}/${entity.id.value}`;
      const card = this.el('section', `entity-card ${kind}`);
      card.dataset.ref = ref;
      card.appendChild(this.el('h2', undefined, entity.name));
      const attrs = this.el('dl', 'entity-attrs');
      for (const [key, value] of Object.entries(entity)) {
        if (key === 'id' || key === 'name' || typeof value !== 'string') continue;
        attrs.appendChild(this.el('dt', undefined, key));
        attrs.appendChild(this.el('dd', undefined, value));
      }
      card.appendChild(attrs);
      card.appendChild(this.chatBox(ref, () => this.showEntities(kind)));
      root.appendChild(card);
    }
  }

  // -- scene carousel ----------------------------------------------------------

  async showScene(index: number): Promise<void> {
    const component: ComponentOut = await this.client.component(this.projectId!, `scene/${index}`);
    const root = this.clear('scene');
    root.appendChild(this.navBar());

    const heading = this.el('h1', undefined, `Scene ${index} of 6`);
    if (component.data.stale) {
      heading.appendChild(this.el('span', 'stale-badge', 'stale'));
    }
    root.appendChild(heading);

    const carousel = this.el('div', 'carousel');
    const prev = this.el('button', 'carousel-prev', 'Previous');
    prev.disabled = index <= 1;
    prev.addEventListener('click', () => void this.showScene(index - 1));
    const next = this.el('button', 'carousel-next', 'Next');
    next.disabled = index >= 6;
    next.addEventListener('click', () => void this.showScene(index + 1));

    const body = this.el('div', 'scene-body');
    const image = this.el('div', 'scene-image');
    image.dataset.handle = component.data.image?.handle ?? '';
    const narration = this.el('p', 'narration');
    narration.appendChild(
      annotateText(this.doc, component.data.narration, component.refs, 'narration'),
    );
    const promptText = this.el('p', 'image-prompt');
    promptText.appendChild(
      annotateText(this.doc, component.data.image_prompt, component.refs, 'image_prompt'),
    );
    body.append(image, narration, promptText);
    carousel.append(prev, body, next);
    root.appendChild(carousel);

    const regen = this.el('button', 'regenerate-scene', 'Regenerate image');
    regen.addEventListener('click', () =>
      void this.client
        .regenerateScene(this.projectId!, index)
        .then(() => this.showScene(index))
        .catch((e) => this.showError(e)),
    );
    root.appendChild(regen);
    root.appendChild(this.chatBox(`scene/${index}/image_prompt`, () => this.showScene(index)));
  }
}

export function mount(root: HTMLElement, baseUrl = ''): App {
  const app = new App(root, new Client(baseUrl));
  void app.start();
  return app;
}
