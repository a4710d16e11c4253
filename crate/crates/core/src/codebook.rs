//! Far-field DFT, polar-domain near-field, hybrid-field and subarray DFT
//! codebooks.
//!
//! Hybrid codeword indices are 1-based. The near block comes first, ordered
//! angle-major and distance-minor, so `p = (q−1)S + s` for `p ≤ QS`; the far
//! block follows with `p = QS + q`.

use num_complex::Complex64;
use serde::Serialize;

use crate::array::{far_steering, steering, ArrayConfig, Range};
use crate::error::{Error, Result};

/// Angle sample `Θ_q = (2q − 1 − Q)/Q`, `q = 1..=Q`.
#[inline]
pub fn angle_sample(q: usize, n_angles: usize) -> f64 {
    (2.0 * q as f64 - 1.0 - n_angles as f64) / n_angles as f64
}

/// Distance ring `d_{q,s} = N^{3/2} λ S (1 − Θ²)/(4√2 s)`.
pub fn distance_sample(cfg: &ArrayConfig, n_dist: usize, theta: f64, s: usize) -> f64 {
    let n = cfg.n_antennas() as f64;
    n.powf(1.5) * cfg.wavelength() * n_dist as f64 * (1.0 - theta * theta)
        / (4.0 * std::f64::consts::SQRT_2 * s as f64)
}

/// Dense complex matrix stored column-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnMatrix {
    rows: usize,
    data: Vec<Complex64>,
}

impl ColumnMatrix {
    fn from_columns<I: IntoIterator<Item = Vec<Complex64>>>(rows: usize, cols: I) -> Self {
        let mut data = Vec::new();
        for c in cols {
            debug_assert_eq!(c.len(), rows);
            data.extend(c);
        }
        Self { rows, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.data.len().checked_div(self.rows).unwrap_or(0)
    }

    /// Column `j`, 0-based.
    pub fn column(&self, j: usize) -> &[Complex64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn columns(&self) -> impl Iterator<Item = &[Complex64]> {
        self.data.chunks_exact(self.rows.max(1))
    }
}

/// Far-field codebook `C_f`: column `q` is `β(N, Θ_q)`.
pub fn build_far_codebook(cfg: &ArrayConfig, n_angles: usize) -> ColumnMatrix {
    let n = cfg.n_antennas();
    ColumnMatrix::from_columns(
        n,
        (1..=n_angles).map(|q| far_steering(n, angle_sample(q, n_angles))),
    )
}

/// Polar-domain codebook `C_n`: column `(q−1)S + s` (1-based) is
/// `α(N, Θ_q, d_{q,s})`.
pub fn build_near_codebook(cfg: &ArrayConfig, n_angles: usize, n_dist: usize) -> ColumnMatrix {
    let layout = CodebookLayout::new(*cfg, n_angles, n_dist);
    ColumnMatrix::from_columns(
        cfg.n_antennas(),
        (1..=n_angles * n_dist).map(|p| layout.generate(p)),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CodewordKind {
    Near,
    Far,
}

impl CodewordKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            CodewordKind::Near => "near",
            CodewordKind::Far => "far",
        }
    }
}

/// Generating parameters of a hybrid codeword.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CodewordParams {
    pub p: usize,
    pub kind: CodewordKind,
    pub q: usize,
    /// Distance index; 0 for far codewords.
    pub s: usize,
    pub theta: f64,
    pub range: Range,
    /// The distance sample lies below the array's validity floor.
    pub below_floor: bool,
}

/// Index geometry of a hybrid codebook; generates columns on demand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CodebookLayout {
    cfg: ArrayConfig,
    n_angles: usize,
    n_dist: usize,
}

impl CodebookLayout {
    pub fn new(cfg: ArrayConfig, n_angles: usize, n_dist: usize) -> Self {
        assert!(n_angles >= 1, "codebook needs at least one angle sample");
        Self {
            cfg,
            n_angles,
            n_dist,
        }
    }

    pub fn cfg(&self) -> &ArrayConfig {
        &self.cfg
    }

    /// `Q`.
    pub fn n_angles(&self) -> usize {
        self.n_angles
    }

    /// `S`.
    pub fn n_dist(&self) -> usize {
        self.n_dist
    }

    pub fn n_near(&self) -> usize {
        self.n_angles * self.n_dist
    }

    /// `Q(S+1)`.
    pub fn len(&self) -> usize {
        self.n_near() + self.n_angles
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn near_index(&self, q: usize, s: usize) -> usize {
        (q - 1) * self.n_dist + s
    }

    pub fn far_index(&self, q: usize) -> usize {
        self.n_near() + q
    }

    pub fn codeword_params(&self, p: usize) -> Result<CodewordParams> {
        if p == 0 || p > self.len() {
            return Err(Error::CodewordIndex {
                index: p,
                len: self.len(),
            });
        }
        Ok(self.params_unchecked(p))
    }

    fn params_unchecked(&self, p: usize) -> CodewordParams {
        if p <= self.n_near() {
            let q = p.div_ceil(self.n_dist);
            let s = p - (q - 1) * self.n_dist;
            let theta = angle_sample(q, self.n_angles);
            let d = distance_sample(&self.cfg, self.n_dist, theta, s);
            CodewordParams {
                p,
                kind: CodewordKind::Near,
                q,
                s,
                theta,
                range: Range::Finite(d),
                below_floor: d < self.cfg.validity_floor(),
            }
        } else {
            let q = p - self.n_near();
            CodewordParams {
                p,
                kind: CodewordKind::Far,
                q,
                s: 0,
                theta: angle_sample(q, self.n_angles),
                range: Range::Far,
                below_floor: false,
            }
        }
    }

    fn generate(&self, p: usize) -> Vec<Complex64> {
        let par = self.params_unchecked(p);
        match par.range {
            Range::Far => far_steering(self.cfg.n_antennas(), par.theta),
            r @ Range::Finite(_) => steering(&self.cfg, par.theta, r),
        }
    }

    /// Column `p` generated on demand.
    pub fn column(&self, p: usize) -> Result<Vec<Complex64>> {
        self.codeword_params(p)?;
        Ok(self.generate(p))
    }

    pub fn params_iter(&self) -> impl Iterator<Item = CodewordParams> + '_ {
        (1..=self.len()).map(|p| self.params_unchecked(p))
    }
}

/// Eagerly built hybrid-field codebook `C_h = {C_n, C_f}`.
#[derive(Debug, Clone)]
pub struct HybridCodebook {
    layout: CodebookLayout,
    near: ColumnMatrix,
    far: ColumnMatrix,
}

impl HybridCodebook {
    pub fn layout(&self) -> &CodebookLayout {
        &self.layout
    }

    pub fn near(&self) -> &ColumnMatrix {
        &self.near
    }

    pub fn far(&self) -> &ColumnMatrix {
        &self.far
    }

    pub fn len(&self) -> usize {
        self.layout.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layout.is_empty()
    }

    /// `[C_h]_{:,p}`, 1-based.
    pub fn column(&self, p: usize) -> Result<&[Complex64]> {
        self.layout.codeword_params(p)?;
        Ok(self.column_unchecked(p))
    }

    pub(crate) fn column_unchecked(&self, p: usize) -> &[Complex64] {
        let n_near = self.layout.n_near();
        if p <= n_near {
            self.near.column(p - 1)
        } else {
            self.far.column(p - n_near - 1)
        }
    }

    pub fn codeword_params(&self, p: usize) -> Result<CodewordParams> {
        self.layout.codeword_params(p)
    }
}

pub fn build_hybrid_codebook(cfg: &ArrayConfig, n_angles: usize, n_dist: usize) -> HybridCodebook {
    HybridCodebook {
        layout: CodebookLayout::new(*cfg, n_angles, n_dist),
        near: build_near_codebook(cfg, n_angles, n_dist),
        far: build_far_codebook(cfg, n_angles),
    }
}

/// Subarray DFT codebook: `M` columns `√M β(M, Φ_m)`, `Φ_m = (2m−1−M)/M`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubarrayCodebook {
    cols: ColumnMatrix,
}

impl SubarrayCodebook {
    pub fn new(m: usize) -> Self {
        let scale = (m as f64).sqrt();
        Self {
            cols: ColumnMatrix::from_columns(
                m,
                (1..=m).map(|i| {
                    far_steering(m, angle_sample(i, m))
                        .into_iter()
                        .map(|x| x * scale)
                        .collect()
                }),
            ),
        }
    }

    pub fn for_array(cfg: &ArrayConfig) -> Self {
        Self::new(cfg.m_per_sub())
    }

    /// `M`.
    pub fn len(&self) -> usize {
        self.cols.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `Φ_m`, 1-based.
    pub fn angle(&self, m: usize) -> f64 {
        angle_sample(m, self.len())
    }

    /// Column `m`, 1-based.
    pub fn column(&self, m: usize) -> &[Complex64] {
        self.cols.column(m - 1)
    }
}

/// Outcome of checking `(Q, S)` against the refinement wrap constraint
/// `S ≥ √2(N−1) / (2N^{3/2}(1/M − 1/Q))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuantizationReport {
    pub ok: bool,
    /// `Q > M`; otherwise the bound is infinite.
    pub angle_ok: bool,
    pub bound: f64,
    /// Smallest admissible `S`, if any.
    pub s_min: Option<usize>,
}

pub fn validate_quantization(cfg: &ArrayConfig, n_angles: usize, n_dist: usize) -> QuantizationReport {
    let n = cfg.n_antennas() as f64;
    let gap = 1.0 / cfg.m_per_sub() as f64 - 1.0 / n_angles as f64;
    if !(gap > 0.0) {
        return QuantizationReport {
            ok: false,
            angle_ok: false,
            bound: f64::INFINITY,
            s_min: None,
        };
    }
    let bound = std::f64::consts::SQRT_2 * (n - 1.0) / (2.0 * n.powf(1.5) * gap);
    let s_min = (bound.ceil() as usize).max(1);
    QuantizationReport {
        ok: n_dist as f64 >= bound,
        angle_ok: true,
        bound,
        s_min: Some(s_min),
    }
}
