import {LabelingClient} from './api';
import {bindKeys} from './keys';
import {ReviewQueue} from './queue';
import type {Candidate, Source} from './types';

const $ = (id: string) => document.getElementById(id)!;

function renderCard(client: LabelingClient, card: Candidate | null): void {
  const img = $('patch') as HTMLImageElement;
  if (!card) {
    img.removeAttribute('src');
    $('label').textContent = 'queue empty — press g to refresh';
    $('badges').textContent = '';
    return;
  }
  img.src = client.patchUrl(card.candidate_id);
  $('label').textContent = `${card.proposed_label} @ ${card.image_id} (${card.x},${card.y})`;
  $('badges').textContent = card.sources.map((s) => `[${s}]`).join(' ');
}

function flash(text: string): void {
  const el = $('flash');
  el.textContent = text;
  setTimeout(() => {
    if (el.textContent === text) el.textContent = '';
  }, 1500);
}

async function start(): Promise<void> {
  const reviewer =
    localStorage.getItem('reviewer') ?? window.prompt('Reviewer name?') ?? 'anonymous';
  localStorage.setItem('reviewer', reviewer);
  const client = new LabelingClient('');
  const queue = new ReviewQueue(client, reviewer);

  const sync = () => {
    renderCard(client, queue.current());
    $('progress').textContent = queue.progress();
  };

  ($('source-filter') as HTMLSelectElement).addEventListener('change', async (e) => {
    const value = (e.target as HTMLSelectElement).value;
    queue.setFilters(value ? {source: value as Source} : {});
    await queue.refresh();
    sync();
  });

  bindKeys(window, async (action) => {
    if (action === 'refresh') {
      await queue.refresh();
    } else if (action === 'skip') {
      queue.skip();
    } else if (queue.current()) {
      const outcome = await queue.decide(action);
      if (outcome === 'conflict') flash('already decided elsewhere');
    }
    sync();
  });

  await queue.refresh();
  sync();
}

start().catch((err) => {
  $('flash').textContent = `failed to load: ${err}`;
});
