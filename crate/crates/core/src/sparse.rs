//! Symmetric sparse matrices: raw adjacency and derived propagation operators.

use ndarray::Array2;

/// Symmetric weighted adjacency without self-loops.
///
/// Entries are stored once with `row < col` and interpreted symmetrically,
/// so symmetry holds by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseAdjacency {
    n: usize,
    /// Upper-triangle entries, sorted ascending by (row, col).
    entries: Vec<(u32, u32, f64)>,
}

impl SparseAdjacency {
    /// `entries` may come in any order and in either orientation; duplicates
    /// of the same unordered pair must carry the same weight.
    pub fn new(n: usize, entries: impl IntoIterator<Item = (usize, usize, f64)>) -> Self {
        let mut upper: Vec<(u32, u32, f64)> = entries
            .into_iter()
            .filter(|(r, c, _)| r != c)
            .map(|(r, c, w)| {
                let (a, b) = if r < c { (r, c) } else { (c, r) };
                (a as u32, b as u32, w)
            })
            .collect();
        upper.sort_by_key(|&(r, c, _)| (r, c));
        upper.dedup_by_key(|&mut (r, c, _)| (r, c));
        Self { n, entries: upper }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn num_edges(&self) -> usize {
        self.entries.len()
    }

    /// Upper-triangle entries, ascending by (row, col).
    pub fn entries(&self) -> &[(u32, u32, f64)] {
        &self.entries
    }

    pub fn weight(&self, x: usize, y: usize) -> f64 {
        if x == y {
            return 0.0;
        }
        let key = if x < y { (x as u32, y as u32) } else { (y as u32, x as u32) };
        match self.entries.binary_search_by_key(&key, |&(r, c, _)| (r, c)) {
            Ok(i) => self.entries[i].2,
            Err(_) => 0.0,
        }
    }

    /// Weighted degree of every node.
    pub fn degrees(&self) -> Vec<f64> {
        let mut deg = vec![0.0; self.n];
        for &(r, c, w) in &self.entries {
            deg[r as usize] += w;
            deg[c as usize] += w;
        }
        deg
    }

    pub fn from_dense(m: &Array2<f64>) -> Self {
        let n = m.nrows();
        assert_eq!(n, m.ncols());
        let mut entries = Vec::new();
        for r in 0..n {
            for c in (r + 1)..n {
                if m[[r, c]] != 0.0 {
                    entries.push((r, c, m[[r, c]]));
                }
            }
        }
        Self::new(n, entries)
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut m = Array2::zeros((self.n, self.n));
        for &(r, c, w) in &self.entries {
            m[[r as usize, c as usize]] = w;
            m[[c as usize, r as usize]] = w;
        }
        m
    }
}

/// Which normalized operator a [`PropagationMatrix`] holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PropagationKind {
    /// L = I - D^{-1/2} M D^{-1/2}, spectrum in [0, 2].
    NormalizedLaplacian,
    /// L~ = (2/lambda_max) L - I, spectrum in [-1, 1].
    RescaledLaplacian,
    /// D^^{-1/2} (M + I) D^^{-1/2}, spectrum in [-1, 1].
    RenormalizedAdjacency,
}

/// Compressed sparse row view of a full symmetric matrix (diagonal included).
#[derive(Debug, Clone, PartialEq)]
pub struct Csr {
    pub n: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<u32>,
    pub data: Vec<f64>,
}

impl Csr {
    /// y = A x for a dense multi-column signal, row-major friendly.
    pub fn matmat(&self, x: &Array2<f64>) -> Array2<f64> {
        assert_eq!(self.n, x.nrows());
        let p = x.ncols();
        let mut out = Array2::<f64>::zeros((self.n, p));
        let xs = x.as_standard_layout();
        let xs = xs.as_slice().unwrap();
        let os = out.as_slice_mut().unwrap();
        for row in 0..self.n {
            let dst = &mut os[row * p..(row + 1) * p];
            for k in self.indptr[row]..self.indptr[row + 1] {
                let col = self.indices[k] as usize;
                let w = self.data[k];
                let src = &xs[col * p..(col + 1) * p];
                for j in 0..p {
                    dst[j] += w * src[j];
                }
            }
        }
        out
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.n, x.len());
        let mut out = vec![0.0; self.n];
        for row in 0..self.n {
            let mut acc = 0.0;
            for k in self.indptr[row]..self.indptr[row + 1] {
                acc += self.data[k] * x[self.indices[k] as usize];
            }
            out[row] = acc;
        }
        out
    }
}

/// Normalized symmetric operator derived from an adjacency matrix.
///
/// Stored as diagonal + upper-triangle entries; a full CSR expansion is built
/// once at construction for fast products.
#[derive(Debug, Clone, PartialEq)]
pub struct PropagationMatrix {
    kind: PropagationKind,
    n: usize,
    diag: Vec<f64>,
    /// Off-diagonal upper-triangle entries, ascending by (row, col).
    off: Vec<(u32, u32, f64)>,
    csr: Csr,
}

impl PropagationMatrix {
    pub fn from_parts(
        kind: PropagationKind,
        n: usize,
        diag: Vec<f64>,
        mut off: Vec<(u32, u32, f64)>,
    ) -> Self {
        assert_eq!(diag.len(), n);
        off.sort_by_key(|&(r, c, _)| (r, c));
        // Build the expanded CSR including the diagonal.
        let mut counts = vec![1usize; n];
        for &(r, c, _) in &off {
            counts[r as usize] += 1;
            counts[c as usize] += 1;
        }
        let mut indptr = vec![0usize; n + 1];
        for i in 0..n {
            indptr[i + 1] = indptr[i] + counts[i];
        }
        let nnz = indptr[n];
        let mut indices = vec![0u32; nnz];
        let mut data = vec![0.0; nnz];
        let mut cursor = indptr.clone();
        // Entries are inserted in ascending column order per row: for row r the
        // upper entries (r, c>r) come sorted, lower entries (c, r<c) arrive in
        // ascending r as we scan, and the diagonal slots in between.
        let mut per_row: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n];
        for i in 0..n {
            per_row[i].push((i as u32, diag[i]));
        }
        for &(r, c, w) in &off {
            per_row[r as usize].push((c, w));
            per_row[c as usize].push((r, w));
        }
        for (row, mut cols) in per_row.into_iter().enumerate() {
            cols.sort_by_key(|&(c, _)| c);
            for (c, w) in cols {
                let k = cursor[row];
                indices[k] = c;
                data[k] = w;
                cursor[row] = k + 1;
            }
        }
        let csr = Csr { n, indptr, indices, data };
        Self { kind, n, diag, off, csr }
    }

    pub fn kind(&self) -> PropagationKind {
        self.kind
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn off_entries(&self) -> &[(u32, u32, f64)] {
        &self.off
    }

    pub fn csr(&self) -> &Csr {
        &self.csr
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut m = Array2::zeros((self.n, self.n));
        for i in 0..self.n {
            m[[i, i]] = self.diag[i];
        }
        for &(r, c, w) in &self.off {
            m[[r as usize, c as usize]] = w;
            m[[c as usize, r as usize]] = w;
        }
        m
    }
}
