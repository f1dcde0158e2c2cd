//! AVX-512 version of the Green operator row kernel.

#![cfg(target_arch = "x86_64")]

use std::arch::x86_64::*;

use crate::lattice_green::FarField;

pub(super) fn available() -> bool {
    is_x86_feature_detected!("avx512f") && is_x86_feature_detected!("avx512dq")
}

pub(super) struct RowKernel<'a, const D: usize> {
    pub coords: [&'a [f64]; D],
    pub far: &'a FarField,
    pub cube: &'a [f64],
    pub w: f64,
    pub stride: [f64; D],
}

impl<const D: usize> RowKernel<'_, D> {
    /// Adds `G(x_i - x_j) v_i` to `y[j]` for `j > i` and returns
    /// `sum_{j > i} G(x_i - x_j) v_j`.
    ///
    /// # Safety
    /// The CPU must support AVX-512F and AVX-512DQ; `v` and `y` must hold one
    /// entry per site.
    #[target_feature(enable = "avx512f,avx512dq")]
    pub(super) unsafe fn upper_row(&self, i: usize, v: &[f64], y: &mut [f64]) -> f64 {
        let lo = i + 1;
        let m = v.len() - lo;
        let vi = _mm512_set1_pd(v[i]);
        let mut acc = _mm512_setzero_pd();
        let c = self.far.coefficients();
        let cv: [__m512d; 18] = std::array::from_fn(|k| _mm512_set1_pd(c[k]));
        let c1 = _mm512_set1_pd(self.far.c1());
        let r0 = _mm512_set1_pd(self.far.near_radius() as f64);
        let half = _mm512_set1_pd(0.5);
        let three_halves = _mm512_set1_pd(1.5);
        let zero = _mm512_setzero_pd();
        let wv = _mm512_set1_pd(self.w);
        let last = _mm512_set1_pd((self.cube.len() - 1) as f64);
        let xi: [__m512d; D] = std::array::from_fn(|a| _mm512_set1_pd(self.coords[a][i]));
        let stride: [__m512d; D] = std::array::from_fn(|a| _mm512_set1_pd(self.stride[a]));
        let v_ptr = v.as_ptr();
        let mut k = 0;
        while k < m {
            let lanes = (m - k).min(8);
            let mask: __mmask8 = if lanes == 8 { 0xff } else { (1u8 << lanes) - 1 };
            let mut dz2 = [zero; D];
            let mut r2 = zero;
            let mut sup = zero;
            let mut idx = zero;
            for a in 0..D {
                let p = self.coords[a].as_ptr().add(lo + k);
                let x = _mm512_maskz_loadu_pd(mask, p);
                let t = _mm512_sub_pd(xi[a], x);
                let at = _mm512_abs_pd(t);
                dz2[a] = _mm512_mul_pd(t, t);
                r2 = _mm512_add_pd(r2, dz2[a]);
                sup = _mm512_max_pd(sup, at);
                idx = _mm512_fmadd_pd(_mm512_min_pd(at, wv), stride[a], idx);
            }
            // 1/r from the 14-bit estimate and two Newton steps
            let half_r2 = _mm512_mul_pd(half, r2);
            let mut rr = _mm512_rsqrt14_pd(r2);
            rr = _mm512_mul_pd(rr, _mm512_fnmadd_pd(half_r2, _mm512_mul_pd(rr, rr), three_halves));
            rr = _mm512_mul_pd(rr, _mm512_fnmadd_pd(half_r2, _mm512_mul_pd(rr, rr), three_halves));
            let inv = _mm512_mul_pd(rr, rr);
            let lead = match D {
                3 => _mm512_mul_pd(c1, rr),
                4 => _mm512_mul_pd(c1, inv),
                _ => _mm512_mul_pd(_mm512_mul_pd(c1, inv), rr),
            };
            let (mut p2, mut p3, mut p4, mut p5, mut p6) = (zero, zero, zero, zero, zero);
            for z in dz2 {
                let u = _mm512_mul_pd(z, inv);
                let u2 = _mm512_mul_pd(u, u);
                let u3 = _mm512_mul_pd(u2, u);
                p2 = _mm512_add_pd(p2, u2);
                p3 = _mm512_add_pd(p3, u3);
                p4 = _mm512_fmadd_pd(u2, u2, p4);
                p5 = _mm512_fmadd_pd(u3, u2, p5);
                p6 = _mm512_fmadd_pd(u3, u3, p6);
            }
            let s1 = _mm512_fmadd_pd(cv[1], p2, cv[0]);
            let mut s2 = _mm512_fmadd_pd(cv[3], p2, cv[2]);
            s2 = _mm512_fmadd_pd(cv[4], p3, s2);
            s2 = _mm512_fmadd_pd(_mm512_mul_pd(cv[5], p2), p2, s2);
            s2 = _mm512_fmadd_pd(cv[6], p4, s2);
            let mut s3 = _mm512_fmadd_pd(cv[8], p2, cv[7]);
            s3 = _mm512_fmadd_pd(cv[9], p3, s3);
            s3 = _mm512_fmadd_pd(cv[10], p4, s3);
            s3 = _mm512_fmadd_pd(cv[11], p5, s3);
            s3 = _mm512_fmadd_pd(cv[12], p6, s3);
            let mut inner = _mm512_mul_pd(cv[13], p2);
            inner = _mm512_fmadd_pd(cv[14], p3, inner);
            inner = _mm512_fmadd_pd(cv[15], p4, inner);
            inner = _mm512_fmadd_pd(_mm512_mul_pd(cv[17], p2), p2, inner);
            s3 = _mm512_fmadd_pd(p2, inner, s3);
            s3 = _mm512_fmadd_pd(_mm512_mul_pd(cv[16], p3), p3, s3);
            let corr = _mm512_mul_pd(inv, _mm512_fmadd_pd(inv, _mm512_fmadd_pd(inv, s3, s2), s1));
            let near = _mm512_cmp_pd_mask::<_CMP_LE_OQ>(sup, r0);
            let corr = _mm512_maskz_mov_pd(near, corr);
            let val = _mm512_fmadd_pd(lead, corr, lead);
            let nonzero = _mm512_cmp_pd_mask::<_CMP_GT_OQ>(r2, zero);
            let val = _mm512_maskz_mov_pd(nonzero, val);
            let slot = _mm512_cvttpd_epi64(_mm512_min_pd(idx, last));
            let g = _mm512_mask_i64gather_pd::<8>(zero, mask, slot, self.cube.as_ptr());
            let gk = _mm512_add_pd(val, g);
            let vj = _mm512_maskz_loadu_pd(mask, v_ptr.add(lo + k));
            acc = _mm512_fmadd_pd(gk, vj, acc);
            let yp = y.as_mut_ptr().add(lo + k);
            let yj = _mm512_maskz_loadu_pd(mask, yp);
            _mm512_mask_storeu_pd(yp, mask, _mm512_fmadd_pd(gk, vi, yj));
            k += 8;
        }
        _mm512_reduce_add_pd(acc)
    }
}
