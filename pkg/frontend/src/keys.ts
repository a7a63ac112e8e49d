export type ReviewAction = 'accept' | 'reject' | 'skip' | 'refresh';

/** Keyboard-first review: one hand stays on the keyboard, mirroring the usual
 * labeling-tool conventions (a/r plus vim-style j for "next"). */
const BINDINGS: Record<string, ReviewAction> = {
  a: 'accept',
  Enter: 'accept',
  r: 'reject',
  x: 'reject',
  s: 'skip',
  j: 'skip',
  g: 'refresh',
};

export function actionForKey(key: string): ReviewAction | null {
  return BINDINGS[key] ?? null;
}

export function bindKeys(
  target: Pick<EventTarget, 'addEventListener'>,
  handler: (action: ReviewAction) => void,
): void {
  target.addEventListener('keydown', (event) => {
    const e = event as KeyboardEvent;
    if (e.ctrlKey || e.metaKey || e.altKey) return;
    const action = actionForKey(e.key);
    if (action) {
      e.preventDefault();
      handler(action);
    }
  });
}
