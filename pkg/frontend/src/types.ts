export type CandidateStatus = 'pending' | 'accepted' | 'rejected';
export type Decision = 'accept' | 'reject';
export type Source = 'periodic' | 'heatmap' | 'random';

/** One auto-labeled patch candidate as returned by the labeling API. The UI
 * renders exactly these fields and never invents labels of its own. */
export interface Candidate {
  candidate_id: string;
  image_id: string;
  x: number;
  y: number;
  width: number;
  height: number;
  proposed_label: string;
  sources: Source[];
  status: CandidateStatus;
  decided_by: string;
}

export interface CandidateFilters {
  status?: CandidateStatus;
  source?: Source;
  label?: string;
}
