import { RatingLabel } from './types.js';

/** Keyboard shortcuts for rating, equivalent to the buttons:
 *    r / R -> real
 *    f / F -> fake
 */
export function labelForKey(key: string): RatingLabel | null {
  switch (key.toLowerCase()) {
    case 'r':
      return 'real';
    case 'f':
      return 'fake';
    default:
      return null;
  }
}

export interface KeyEventLike {
  key: string;
  preventDefault(): void;
}

export interface KeyTarget {
  addEventListener(type: string, listener: (ev: KeyEventLike) => void): void;
  removeEventListener(type: string, listener: (ev: KeyEventLike) => void): void;
}

/** Install the rating shortcuts on a target; returns an uninstaller. */
export function bindRatingKeys(target: KeyTarget, onLabel: (label: RatingLabel) => void): () => void {
  const listener = (ev: KeyEventLike) => {
    const label = labelForKey(ev.key);
    if (label !== null) {
      ev.preventDefault();
      onLabel(label);
    }
  };
  target.addEventListener('keydown', listener);
  return () => target.removeEventListener('keydown', listener);
}
