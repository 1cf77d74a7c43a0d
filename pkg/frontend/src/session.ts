import { ApiError, StudyApiClient } from './api.js';
import { Progress, RatingLabel } from './types.js';

/** Client-side view of one rater's pass through a study.
 *
 * Never contains or derives the item's hidden source; advances only after
 * the service acknowledges a rating.
 */
export interface SessionState {
  studyId: string;
  raterId: string;
  itemId: string | null;
  imageUrl: string | null;
  progress: Progress;
  finished: boolean;
  /** Human-readable error with a retry affordance, or null. */
  error: string | null;
}

export type StateListener = (state: SessionState) => void;
export type ImagePreloader = (url: string) => void;

/** Forward-only session state machine driving the rating flow.
 *
 * submit() is double-submit guarded: while a rating is in flight, further
 * submissions are ignored. A server-side duplicate rejection (409) is not an
 * error — the state is resynchronized from the service instead.
 */
export class RaterSession {
  private state: SessionState;
  private pending = false;
  private listeners: StateListener[] = [];

  constructor(
    private readonly api: StudyApiClient,
    studyId: string,
    raterId: string,
    private readonly preload: ImagePreloader = () => {},
  ) {
    this.state = {
      studyId,
      raterId,
      itemId: null,
      imageUrl: null,
      progress: { rated: 0, total: 0 },
      finished: false,
      error: null,
    };
  }

  current(): SessionState {
    return { ...this.state, progress: { ...this.state.progress } };
  }

  onChange(listener: StateListener): void {
    this.listeners.push(listener);
  }

  /** Load (or reload) the next unrated item from the service. */
  async fetchNext(): Promise<SessionState> {
    try {
      const next = await this.api.next(this.state.studyId, this.state.raterId);
      const imageUrl = next.image_url ? this.api.imageUrl(next.image_url) : null;
      this.setState({
        ...this.state,
        itemId: next.item_id,
        imageUrl,
        progress: next.progress,
        finished: next.finished,
        error: null,
      });
      if (imageUrl) {
        this.preload(imageUrl);
      }
    } catch (err) {
      this.setState({ ...this.state, error: describe(err) });
    }
    return this.current();
  }

  /** Submit a rating for the current item and advance.
   *
   * Returns the new state, or null when the submission was ignored by the
   * double-submit guard or there is no current item.
   */
  async submit(label: RatingLabel): Promise<SessionState | null> {
    if (this.pending || !this.state.itemId || this.state.finished) {
      return null;
    }
    this.pending = true;
    try {
      await this.api.submitRating(this.state.studyId, this.state.raterId, this.state.itemId, label);
    } catch (err) {
      if (!(err instanceof ApiError && err.status === 409)) {
        this.setState({ ...this.state, error: describe(err) });
        this.pending = false;
        return this.current();
      }
      // duplicate: another tab got there first; fall through and resync
    }
    const next = await this.fetchNext();
    this.pending = false;
    return next;
  }

  private setState(state: SessionState): void {
    this.state = state;
    for (const listener of this.listeners) {
      listener(this.current());
    }
  }
}

function describe(err: unknown): string {
  if (err instanceof ApiError) {
    return `service error ${err.status}: ${err.message}`;
  }
  return err instanceof Error ? err.message : String(err);
}
