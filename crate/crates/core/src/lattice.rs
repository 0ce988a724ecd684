//! Exact integer lattice utilities: Hermite normal form, rank and
//! membership. Vectors are rows; arithmetic is carried in `i128`.

pub fn gcd(a: i64, b: i64) -> i64 {
    let (mut a, mut b) = (a.unsigned_abs(), b.unsigned_abs());
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a as i64
}

pub fn gcd_all(v: &[i64]) -> i64 {
    v.iter().fold(0, |g, &c| gcd(g, c))
}

pub fn is_primitive(v: &[i64]) -> bool {
    gcd_all(v) == 1
}

/// Extended Euclid: returns `(g, s, t)` with `s·a + t·b = g ≥ 0`.
fn ext_gcd(a: i128, b: i128) -> (i128, i128, i128) {
    let (mut old_r, mut r) = (a, b);
    let (mut old_s, mut s) = (1i128, 0i128);
    let (mut old_t, mut t) = (0i128, 1i128);
    while r != 0 {
        let q = old_r.div_euclid(r);
        (old_r, r) = (r, old_r - q * r);
        (old_s, s) = (s, old_s - q * s);
        (old_t, t) = (t, old_t - q * t);
    }
    if old_r < 0 {
        (-old_r, -old_s, -old_t)
    } else {
        (old_r, old_s, old_t)
    }
}

/// Row-style Hermite normal form of the lattice spanned by `rows`.
///
/// The result has one row per independent generator, strictly increasing
/// pivot columns, positive pivots and entries above each pivot reduced into
/// `[0, pivot)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HermiteForm {
    pub dim: usize,
    pub rows: Vec<Vec<i128>>,
    pub pivots: Vec<usize>,
}

impl HermiteForm {
    pub fn new(dim: usize, vectors: &[Vec<i64>]) -> Self {
        let mut m: Vec<Vec<i128>> = vectors
            .iter()
            .map(|v| {
                assert_eq!(v.len(), dim, "lattice vector has wrong dimension");
                v.iter().map(|&c| c as i128).collect()
            })
            .collect();
        let mut rows = Vec::new();
        let mut pivots = Vec::new();
        let mut top = 0;
        for col in 0..dim {
            // Fold every remaining row's entry in this column into row `top`.
            let Some(first) = (top..m.len()).find(|&r| m[r][col] != 0) else {
                continue;
            };
            m.swap(top, first);
            for r in top + 1..m.len() {
                if m[r][col] == 0 {
                    continue;
                }
                let (a, b) = (m[top][col], m[r][col]);
                let (g, s, t) = ext_gcd(a, b);
                let (ua, ub) = (a / g, b / g);
                let new_top: Vec<i128> =
                    (0..dim).map(|c| s * m[top][c] + t * m[r][c]).collect();
                let new_r: Vec<i128> = (0..dim).map(|c| ua * m[r][c] - ub * m[top][c]).collect();
                m[top] = new_top;
                m[r] = new_r;
            }
            if m[top][col] < 0 {
                m[top].iter_mut().for_each(|c| *c = -*c);
            }
            pivots.push(col);
            top += 1;
            if top == m.len() {
                break;
            }
        }
        rows.extend(m.into_iter().take(top));
        // Reduce entries above pivots.
        for i in 0..rows.len() {
            let (pc, pv) = (pivots[i], rows[i][pivots[i]]);
            for j in 0..i {
                let q = rows[j][pc].div_euclid(pv);
                if q != 0 {
                    for c in 0..dim {
                        rows[j][c] -= q * rows[i][c];
                    }
                }
            }
        }
        Self { dim, rows, pivots }
    }

    pub fn rank(&self) -> usize {
        self.rows.len()
    }

    /// Exact membership test: `v` is an integer combination of the rows.
    pub fn contains(&self, v: &[i64]) -> bool {
        if v.len() != self.dim {
            return false;
        }
        let mut w: Vec<i128> = v.iter().map(|&c| c as i128).collect();
        for (row, &pc) in self.rows.iter().zip(&self.pivots) {
            // Entries left of this pivot must already vanish.
            if w[..pc].iter().any(|&c| c != 0) {
                return false;
            }
            let pv = row[pc];
            if w[pc] % pv != 0 {
                return false;
            }
            let q = w[pc] / pv;
            for c in 0..self.dim {
                w[c] -= q * row[c];
            }
        }
        w.iter().all(|&c| c == 0)
    }
}

pub fn integer_rank(dim: usize, vectors: &[Vec<i64>]) -> usize {
    HermiteForm::new(dim, vectors).rank()
}


/// Basis of the integer kernel `{v ∈ ℤᴺ : ⟨r, v⟩ = 0 for every row r}`.
///
/// Column operations are tracked in a unimodular matrix; once every row is
/// reduced to echelon form, the columns beyond the last pivot span the
/// kernel, which is automatically saturated.
pub fn kernel_basis(dim: usize, rows: &[Vec<i64>]) -> Vec<Vec<i64>> {
    let mut m: Vec<Vec<i128>> =
        rows.iter().map(|r| r.iter().map(|&c| c as i128).collect()).collect();
    // u[c] is column c of the transform, stored as a vector.
    let mut u: Vec<Vec<i128>> =
        (0..dim).map(|c| (0..dim).map(|r| i128::from(r == c)).collect()).collect();
    let mut lead = 0;
    for row in 0..m.len() {
        if lead == dim {
            break;
        }
        for c in lead + 1..dim {
            if m[row][c] == 0 {
                continue;
            }
            let (a, b) = (m[row][lead], m[row][c]);
            let (g, s, t) = ext_gcd(a, b);
            let (ua, ub) = (a / g, b / g);
            for r in m.iter_mut() {
                let (x, y) = (r[lead], r[c]);
                r[lead] = s * x + t * y;
                r[c] = ua * y - ub * x;
            }
            let (cl, cc) = (u[lead].clone(), u[c].clone());
            u[lead] = (0..dim).map(|i| s * cl[i] + t * cc[i]).collect();
            u[c] = (0..dim).map(|i| ua * cc[i] - ub * cl[i]).collect();
        }
        if m[row][lead] != 0 {
            lead += 1;
        }
    }
    u[lead..]
        .iter()
        .map(|col| col.iter().map(|&c| i64::try_from(c).expect("kernel entry overflow")).collect())
        .collect()
}

/// Hermite basis of the saturation `span_ℚ(vectors) ∩ ℤᴺ`.
pub fn saturate(dim: usize, vectors: &[Vec<i64>]) -> HermiteForm {
    let independent = HermiteForm::new(dim, vectors);
    if independent.rank() == 0 {
        return independent;
    }
    let ker = kernel_basis(dim, vectors);
    if ker.is_empty() {
        let id: Vec<Vec<i64>> =
            (0..dim).map(|c| (0..dim).map(|r| i64::from(r == c)).collect()).collect();
        return HermiteForm::new(dim, &id);
    }
    HermiteForm::new(dim, &kernel_basis(dim, &ker))
}

impl HermiteForm {
    /// Rows converted back to `i64`.
    pub fn rows_i64(&self) -> Vec<Vec<i64>> {
        self.rows
            .iter()
            .map(|r| r.iter().map(|&c| i64::try_from(c).expect("lattice entry overflow")).collect())
            .collect()
    }
}
