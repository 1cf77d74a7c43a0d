import { StudyApiClient } from './api.js';
import { bindRatingKeys } from './keyboard.js';
import { getOrCreateRaterToken } from './raterToken.js';
import { RaterSession, SessionState } from './session.js';

/** Browser bootstrap: wires the session machine to the static page.
 *
 * Configuration: ?study=<id> selects the study; the base URL defaults to the
 * origin serving the page (the study service mounts this app at /ui).
 * Forward-only, one image at a time, letterboxed canvas, R/F shortcuts.
 */
export function boot(doc: Document, win: Window): RaterSession | null {
  const params = new URLSearchParams(win.location.search);
  const studyId = params.get('study');
  const status = doc.getElementById('status') as HTMLElement;
  if (!studyId) {
    status.textContent = 'Missing ?study=<id> in the URL.';
    return null;
  }
  const baseUrl = params.get('base') ?? win.location.origin;
  const raterId = getOrCreateRaterToken(win.localStorage);

  const api = new StudyApiClient(baseUrl);
  // preload one ahead so judging is never delayed by image latency
  const preload = (url: string) => {
    const img = new Image();
    img.src = url;
  };
  const session = new RaterSession(api, studyId, raterId, preload);

  const image = doc.getElementById('item-image') as HTMLImageElement;
  const progress = doc.getElementById('progress') as HTMLElement;
  const done = doc.getElementById('done') as HTMLElement;
  const controls = doc.getElementById('controls') as HTMLElement;
  const retry = doc.getElementById('retry') as HTMLButtonElement;

  const render = (state: SessionState) => {
    progress.textContent = `${state.progress.rated} / ${state.progress.total}`;
    if (state.error) {
      status.textContent = state.error;
      retry.hidden = false;
      return;
    }
    status.textContent = '';
    retry.hidden = true;
    if (state.finished) {
      image.hidden = true;
      controls.hidden = true;
      done.hidden = false;
      return;
    }
    if (state.imageUrl) {
      image.src = state.imageUrl;
      image.hidden = false;
    }
  };
  session.onChange(render);

  const rate = (label: 'real' | 'fake') => void session.submit(label);
  (doc.getElementById('btn-real') as HTMLButtonElement).addEventListener('click', () => rate('real'));
  (doc.getElementById('btn-fake') as HTMLButtonElement).addEventListener('click', () => rate('fake'));
  retry.addEventListener('click', () => void session.fetchNext());
  bindRatingKeys(win as unknown as Parameters<typeof bindRatingKeys>[0], rate);

  void session.fetchNext();
  return session;
}

if (typeof document !== 'undefined' && document.getElementById('rater-app')) {
  boot(document, window);
}
