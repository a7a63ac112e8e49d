import type {Candidate, Decision} from '../src/types';

/** In-memory stand-in for the labeling endpoints with the same first-decision-
 * wins semantics as the service. Used by the unit tests; the end-to-end test
 * talks to the real server instead. */
export class FakeLabelingServer {
  readonly candidates = new Map<string, Candidate>();
  failNext: number | null = null; // force the next request to fail with this status

  seed(n: number, sources: Candidate['sources'] = ['periodic']): void {
    for (let i = 0; i < n; i++) {
      const id = `cand-${String(i).padStart(3, '0')}`;
      this.candidates.set(id, {
        candidate_id: id,
        image_id: `img-${i}`,
        x: 0,
        y: 0,
        width: 224,
        height: 224,
        proposed_label: 'defect',
        sources,
        status: 'pending',
        decided_by: '',
      });
    }
  }

  fetch = async (url: string, init?: RequestInit): Promise<Response> => {
    if (this.failNext !== null) {
      const status = this.failNext;
      this.failNext = null;
      return json(status, {error: 'service/INTERNAL', message: 'injected failure'});
    }
    const u = new URL(url, 'http://fake');
    const decideMatch = u.pathname.match(/\/v1\/labeling\/candidates\/([^/]+)\/decision$/);
    if (decideMatch && init?.method === 'POST') {
      const cand = this.candidates.get(decideMatch[1]);
      if (!cand) return json(404, {error: 'service/UNKNOWN_CANDIDATE', message: 'no such candidate'});
      const body = JSON.parse(String(init.body)) as {decision: Decision; decided_by: string};
      if (cand.status !== 'pending') {
        return json(409, {error: 'service/CONFLICT', message: `already ${cand.status}`});
      }
      cand.status = body.decision === 'accept' ? 'accepted' : 'rejected';
      cand.decided_by = body.decided_by;
      return json(200, cand);
    }
    if (u.pathname === '/v1/labeling/candidates') {
      let out = [...this.candidates.values()];
      const status = u.searchParams.get('status');
      const source = u.searchParams.get('source');
      if (status) out = out.filter((c) => c.status === status);
      if (source) out = out.filter((c) => c.sources.includes(source as never));
      return json(200, out);
    }
    return json(404, {error: 'service/INTERNAL', message: `unroutable ${u.pathname}`});
  };
}

function json(status: number, body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: {'Content-Type': 'application/json'},
  });
}
