/** Rater token persistence: the only client state that survives a reload.
 *
 * Reloading mid-study resumes at the correct next item because the service
 * tracks progress per rater id.
 */

export interface StorageLike {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
}

const KEY = 'wbganlab.rater_token';

export function getOrCreateRaterToken(storage: StorageLike, random: () => number = Math.random): string {
  const existing = storage.getItem(KEY);
  if (existing) {
    return existing;
  }
  const token = 'rater-' + Array.from({ length: 16 }, () => Math.floor(random() * 16).toString(16)).join('');
  storage.setItem(KEY, token);
  return token;
}
