import { AckResponse, NextItemResponse, RatingLabel, RatingRequest } from './types.js';

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

/** Error carrying the HTTP status so callers can branch on 409/404. */
export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = 'ApiError';
  }
}

/** Thin typed client over the study service's rater-facing endpoints. */
export class StudyApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {
    this.baseUrl = baseUrl.replace(/\/$/, '');
  }

  /** Next unrated item for a rater, or the finished flag. */
  async next(studyId: string, raterId: string): Promise<NextItemResponse> {
    const resp = await this.fetchFn(
      `${this.baseUrl}/studies/${encodeURIComponent(studyId)}/raters/${encodeURIComponent(raterId)}/next`,
    );
    return this.decode<NextItemResponse>(resp);
  }

  /** Submit one rating; a duplicate raises ApiError(409). */
  async submitRating(studyId: string, raterId: string, itemId: string, label: RatingLabel): Promise<AckResponse> {
    const body: RatingRequest = { rater_id: raterId, item_id: itemId, label };
    const resp = await this.fetchFn(`${this.baseUrl}/studies/${encodeURIComponent(studyId)}/ratings`, {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify(body),
    });
    return this.decode<AckResponse>(resp);
  }

  /** Absolute URL for an item's blinded image. */
  imageUrl(relative: string): string {
    return relative.startsWith('http') ? relative : this.baseUrl + relative;
  }

  private async decode<T>(resp: Response): Promise<T> {
    if (!resp.ok) {
      const text = await resp.text();
      throw new ApiError(resp.status, text || resp.statusText);
    }
    return (await resp.json()) as T;
  }
}
