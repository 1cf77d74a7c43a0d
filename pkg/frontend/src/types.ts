/** Payload types mirroring the study service's HTTP API.
 *
 * Deliberately blind: no payload type has a field for the item's source
 * model, so the compiler itself rules out accidental unblinding.
 */

export type RatingLabel = 'real' | 'fake';

export interface Progress {
  rated: number;
  total: number;
}

export interface NextItemResponse {
  item_id: string | null;
  image_url: string | null;
  progress: Progress;
  finished: boolean;
}

export interface RatingRequest {
  rater_id: string;
  item_id: string;
  label: RatingLabel;
}

export interface AckResponse {
  status: string;
}
