import type {Candidate, CandidateFilters, Decision} from './types';

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

/** Error codes come back as "area/NAME" strings from the service. */
export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
  }

  get isConflict(): boolean {
    return this.code === 'service/CONFLICT';
  }
}

/** Thin typed client for the labeling endpoints — the only writes the UI is
 * allowed to make go through decide(). */
export class LabelingClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (url, init) => fetch(url, init),
  ) {}

  async listCandidates(filters: CandidateFilters = {}): Promise<Candidate[]> {
    const params = new URLSearchParams();
    if (filters.status) params.set('status', filters.status);
    if (filters.source) params.set('source', filters.source);
    if (filters.label) params.set('label', filters.label);
    const query = params.toString();
    const resp = await this.fetchImpl(
      `${this.baseUrl}/v1/labeling/candidates${query ? `?${query}` : ''}`,
    );
    return this.unwrap<Candidate[]>(resp);
  }

  async decide(candidateId: string, decision: Decision, reviewer: string): Promise<Candidate> {
    const resp = await this.fetchImpl(
      `${this.baseUrl}/v1/labeling/candidates/${candidateId}/decision`,
      {
        method: 'POST',
        headers: {'Content-Type': 'application/json'},
        body: JSON.stringify({decision, decided_by: reviewer}),
      },
    );
    return this.unwrap<Candidate>(resp);
  }

  patchUrl(candidateId: string): string {
    return `${this.baseUrl}/v1/labeling/candidates/${candidateId}/patch.png`;
  }

  private async unwrap<T>(resp: Response): Promise<T> {
    if (resp.ok) return (await resp.json()) as T;
    let code = 'service/INTERNAL';
    let message = `HTTP ${resp.status}`;
    try {
      const body = (await resp.json()) as {error?: string; message?: string};
      if (body.error) code = body.error;
      if (body.message) message = body.message;
    } catch {
      // non-JSON error body; keep the generic message
    }
    throw new ApiError(resp.status, code, message);
  }
}
