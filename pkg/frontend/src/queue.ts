import {ApiError, LabelingClient} from './api';
import type {Candidate, CandidateFilters, Decision} from './types';

export interface QueueStats {
  decided: number;
  conflicts: number;
  skipped: number;
  /** Pending candidates seen since the last refresh, decided or not. */
  total: number;
}

export type DecideOutcome = 'ok' | 'conflict';

/**
 * Review queue with optimistic decisions.
 *
 * decide() removes the current card immediately and issues exactly one POST.
 * If the server answers CONFLICT (another reviewer got there first) the card
 * stays removed — it is no longer pending — and the conflict is counted so the
 * UI can flash "already decided elsewhere". Any other failure rolls the card
 * back into its old position.
 */
export class ReviewQueue {
  private items: Candidate[] = [];
  readonly stats: QueueStats = {decided: 0, conflicts: 0, skipped: 0, total: 0};

  constructor(
    private readonly client: LabelingClient,
    private readonly reviewer: string,
    private filters: Omit<CandidateFilters, 'status'> = {},
  ) {}

  async refresh(): Promise<void> {
    const currentId = this.items[0]?.candidate_id;
    const fresh = await this.client.listCandidates({...this.filters, status: 'pending'});
    // Never lose queue position: rotate the fresh list so the card the
    // reviewer is looking at stays on top if it is still pending.
    const keep = fresh.findIndex((c) => c.candidate_id === currentId);
    this.items = keep > 0 ? [...fresh.slice(keep), ...fresh.slice(0, keep)] : fresh;
    this.stats.total = fresh.length;
  }

  setFilters(filters: Omit<CandidateFilters, 'status'>): void {
    this.filters = filters;
  }

  current(): Candidate | null {
    return this.items[0] ?? null;
  }

  remaining(): number {
    return this.items.length;
  }

  /** "3 / 50" style progress for the header. */
  progress(): string {
    const done = this.stats.total - this.items.length;
    return `${done} / ${this.stats.total}`;
  }

  skip(): void {
    const head = this.items.shift();
    if (head) {
      this.items.push(head);
      this.stats.skipped += 1;
    }
  }

  async decide(decision: Decision): Promise<DecideOutcome> {
    const head = this.items.shift();
    if (!head) throw new Error('queue is empty');
    try {
      await this.client.decide(head.candidate_id, decision, this.reviewer);
      this.stats.decided += 1;
      return 'ok';
    } catch (err) {
      if (err instanceof ApiError && err.isConflict) {
        // Someone else decided it; advance without restoring.
        this.stats.conflicts += 1;
        return 'conflict';
      }
      this.items.unshift(head); // rollback: the decision did not land
      throw err;
    }
  }
}
