//! Score-only local alignment. On x86_64 this uses a striped SSE2 kernel
//! over 8 x i16 lanes with a lazy F pass; scores that could saturate fall
//! back to the scalar kernel, so results are always exact.

use super::QueryProfile;
use crate::alphabet::ALPHABET_SIZE;
use crate::karlin::GappedKarlinParams;

const LANES: usize = 8;

/// Query profile rearranged into the striped layout: for residue `r`,
/// segment `s`, lane `l` holds the score of query position `s + l * seg_len`.
#[derive(Clone, Debug)]
pub struct StripedProfile {
    query_len: usize,
    seg_len: usize,
    scores: Vec<i16>,
    max_score: i32,
    fits_i16: bool,
    scalar: QueryProfile,
}

impl StripedProfile {
    pub fn new(profile: &QueryProfile) -> Self {
        let m = profile.len();
        let seg_len = m.div_ceil(LANES).max(1);
        let mut scores = vec![0i16; ALPHABET_SIZE * seg_len * LANES];
        let mut max_score = 0;
        let mut fits_i16 = true;
        for r in 0..ALPHABET_SIZE {
            for s in 0..seg_len {
                for l in 0..LANES {
                    let pos = s + l * seg_len;
                    let v = if pos < m { profile.score(pos, r as u8) } else { 0 };
                    max_score = max_score.max(v);
                    fits_i16 &= (i16::MIN as i32 / 2..=i16::MAX as i32 / 2).contains(&v);
                    scores[(r * seg_len + s) * LANES + l] = v as i16;
                }
            }
        }
        Self {
            query_len: m,
            seg_len,
            scores,
            max_score,
            fits_i16,
            scalar: profile.clone(),
        }
    }

    pub fn query_len(&self) -> usize {
        self.query_len
    }
}

/// Best local alignment score, identical to the traceback kernel's score.
pub fn score_only(profile: &StripedProfile, target: &[u8], gaps: &GappedKarlinParams) -> i32 {
    if profile.query_len == 0 || target.is_empty() {
        return 0;
    }
    #[cfg(target_arch = "x86_64")]
    {
        let open = gaps.gap_open + gaps.gap_extend;
        if profile.fits_i16 && open < i16::MAX as i32 / 2 {
            // SAFETY: SSE2 is part of the x86_64 baseline.
            let s = unsafe { sse2::striped(profile, target, open as i16, gaps.gap_extend as i16) };
            if let Some(s) = s {
                return s;
            }
        }
    }
    scalar_score(&profile.scalar, target, gaps)
}

/// Linear-space Gotoh recurrence.
pub fn scalar_score(profile: &QueryProfile, target: &[u8], gaps: &GappedKarlinParams) -> i32 {
    let open = gaps.gap_open + gaps.gap_extend;
    let ext = gaps.gap_extend;
    let n = target.len();
    let mut h_prev = vec![0i32; n + 1];
    let mut h_cur = vec![0i32; n + 1];
    let mut f_col = vec![i32::MIN / 4; n + 1];
    let mut best = 0;
    for row in profile.rows() {
        let mut e = i32::MIN / 4;
        for j in 1..=n {
            e = (e - ext).max(h_cur[j - 1] - open);
            f_col[j] = (f_col[j] - ext).max(h_prev[j] - open);
            let h = (h_prev[j - 1] + row[target[j - 1] as usize])
                .max(e)
                .max(f_col[j])
                .max(0);
            h_cur[j] = h;
            best = best.max(h);
        }
        std::mem::swap(&mut h_prev, &mut h_cur);
    }
    best
}

#[cfg(target_arch = "x86_64")]
mod sse2 {
    use super::{StripedProfile, LANES};
    use std::arch::x86_64::*;

    /// Returns `None` if the score came close enough to `i16::MAX` that
    /// saturation may have occurred.
    #[target_feature(enable = "sse2")]
    pub(super) unsafe fn striped(p: &StripedProfile, target: &[u8], open: i16, ext: i16) -> Option<i32> {
        let seg = p.seg_len;
        let v_open = _mm_set1_epi16(open);
        let v_ext = _mm_set1_epi16(ext);
        let zero = _mm_setzero_si128();
        let floor = _mm_set1_epi16(i16::MIN);
        // shifting F across the lane boundary must bring in -inf, not 0
        let lane0_floor = _mm_insert_epi16::<0>(zero, i16::MIN as i32);
        let mut h_store = vec![zero; seg];
        let mut h_load = vec![zero; seg];
        let mut e_vec = vec![zero; seg];
        let mut v_max = zero;
        let prof = p.scores.as_ptr() as *const __m128i;

        for &res in target {
            let base = prof.add(res as usize * seg);
            let mut v_f = floor;
            let mut v_h = _mm_slli_si128::<2>(h_store[seg - 1]);
            std::mem::swap(&mut h_store, &mut h_load);
            for s in 0..seg {
                v_h = _mm_adds_epi16(v_h, _mm_loadu_si128(base.add(s)));
                let e = e_vec[s];
                v_h = _mm_max_epi16(v_h, e);
                v_h = _mm_max_epi16(v_h, v_f);
                v_h = _mm_max_epi16(v_h, zero);
                v_max = _mm_max_epi16(v_max, v_h);
                h_store[s] = v_h;
                let h_gap = _mm_subs_epi16(v_h, v_open);
                e_vec[s] = _mm_max_epi16(_mm_subs_epi16(e, v_ext), h_gap);
                v_f = _mm_max_epi16(_mm_subs_epi16(v_f, v_ext), h_gap);
                v_h = h_load[s];
            }

            // lazy F: propagate vertical gaps that cross segment boundaries
            v_f = _mm_or_si128(_mm_slli_si128::<2>(v_f), lane0_floor);
            let mut s = 0;
            while _mm_movemask_epi8(_mm_cmpgt_epi16(v_f, _mm_subs_epi16(h_store[s], v_open))) != 0 {
                let h = _mm_max_epi16(h_store[s], v_f);
                h_store[s] = h;
                v_max = _mm_max_epi16(v_max, h);
                e_vec[s] = _mm_max_epi16(e_vec[s], _mm_subs_epi16(h, v_open));
                v_f = _mm_subs_epi16(v_f, v_ext);
                s += 1;
                if s == seg {
                    s = 0;
                    v_f = _mm_or_si128(_mm_slli_si128::<2>(v_f), lane0_floor);
                }
            }
        }

        let mut lanes = [0i16; LANES];
        _mm_storeu_si128(lanes.as_mut_ptr() as *mut __m128i, v_max);
        let best = *lanes.iter().max().unwrap() as i32;
        (best < i16::MAX as i32 - p.max_score.max(1)).then_some(best)
    }
}
