//! The shared static dense index: build once, search by inner product.
//!
//! Two structures: `flat` scans every row exactly, `clustered` is an
//! IVF-style layout (seeded k-means centroids, per-cluster member lists)
//! probing only the `nprobe` clusters whose centroids score highest against
//! the query. Ordering is always (inner product descending, id ascending), so
//! results are deterministic and ranking agrees with any strictly monotone
//! transform of the inner product.
//!
//! Persistence is a custom little-endian format, bit-exact across round
//! trips:
//!
//! ```text
//! magic "PGRAIDX1" | u32 version=1 | u32 structure (0=flat, 1=clustered)
//! u32 dim | u64 count | u64 ids[count] | f32 vectors[count*dim]
//! clustered only:
//!   u32 n_clusters | f32 centroids[n_clusters*dim]
//!   u64 cluster_sizes[n_clusters] | u64 member row indices, concatenated
//! ```

use std::path::Path;

use crate::corpus::Corpus;
use crate::encoder::{encode_batch, EmbeddingVector, EncoderConfig};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"PGRAIDX1";
const VERSION: u32 = 1;
const KMEANS_MAX_ITERS: usize = 25;

#[derive(Debug, Clone, PartialEq)]
enum Structure {
    Flat,
    Clustered {
        centroids: Vec<f32>,
        members: Vec<Vec<u64>>,
    },
}

/// Immutable dense index mapping vectors to evidence ids.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseIndex {
    dim: usize,
    ids: Vec<u64>,
    vectors: Vec<f32>,
    structure: Structure,
}

/// One search result; `rank` is 1-based within the returned list.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchHit {
    pub id: u64,
    pub inner_product: f64,
    pub rank: usize,
}

fn dot(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn squared_distance(a: &[f32], b: &[f32]) -> f32 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

impl DenseIndex {
    /// Build a flat index from raw rows (row-major `count * dim`).
    pub fn from_rows(ids: Vec<u64>, dim: usize, vectors: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidConfig("index dim must be at least 1".into()));
        }
        if ids.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        if vectors.len() != ids.len() * dim {
            return Err(Error::LengthMismatch {
                context: "index rows".into(),
                left: vectors.len(),
                right: ids.len() * dim,
            });
        }
        let mut seen = std::collections::HashSet::new();
        for &id in &ids {
            if !seen.insert(id) {
                return Err(Error::DuplicateId { id, line: 0 });
            }
        }
        if let Some(bad) = vectors.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "index vector contains non-finite value {bad}"
            )));
        }
        Ok(DenseIndex {
            dim,
            ids,
            vectors,
            structure: Structure::Flat,
        })
    }

    /// Encode every record with the stage-1 encoder and build a flat index,
    /// one row per record in corpus order. Any encoder failure aborts the
    /// build; no partial index exists afterwards.
    pub fn build_flat(corpus: &Corpus, encoder: &EncoderConfig) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let mut ids = Vec::with_capacity(corpus.len());
        let mut vectors = Vec::with_capacity(corpus.len() * encoder.dim);
        let texts: Vec<String> = corpus.records().iter().map(|r| r.text.clone()).collect();
        for chunk_start in (0..texts.len()).step_by(encoder.batch_size) {
            let chunk = &texts[chunk_start..(chunk_start + encoder.batch_size).min(texts.len())];
            for vector in encode_batch(encoder, chunk)? {
                vectors.extend_from_slice(vector.values());
            }
        }
        for record in corpus.records() {
            ids.push(record.id);
        }
        Self::from_rows(ids, encoder.dim, vectors)
    }

    /// Build a clustered index. The `seed` parameter is carried for interface
    /// stability; the initialization below is already fully deterministic
    /// (centroid j starts at row floor(j*count/n_clusters)).
    pub fn build_clustered(
        corpus: &Corpus,
        encoder: &EncoderConfig,
        n_clusters: usize,
        seed: u64,
    ) -> Result<Self> {
        Self::build_flat(corpus, encoder)?.into_clustered(n_clusters, seed)
    }

    /// Fit k-means over the rows of this index and return the clustered
    /// variant. 25 iterations maximum, stopping early when assignments are
    /// stable; an empty cluster is re-seeded with the point currently
    /// farthest from its own centroid.
    pub fn into_clustered(self, n_clusters: usize, _seed: u64) -> Result<Self> {
        let count = self.ids.len();
        if n_clusters == 0 || n_clusters > count {
            return Err(Error::InvalidConfig(format!(
                "n_clusters must be in 1..={count}, got {n_clusters}"
            )));
        }
        let dim = self.dim;
        let row = |i: usize| &self.vectors[i * dim..(i + 1) * dim];

        let mut centroids = vec![0.0f32; n_clusters * dim];
        for j in 0..n_clusters {
            let source = (j * count) / n_clusters;
            centroids[j * dim..(j + 1) * dim].copy_from_slice(row(source));
        }

        let mut assignments = vec![usize::MAX; count];
        for _iter in 0..KMEANS_MAX_ITERS {
            let mut changed = false;
            let mut sizes = vec![0usize; n_clusters];
            for (i, slot) in assignments.iter_mut().enumerate() {
                let mut best = 0usize;
                let mut best_dist = f32::INFINITY;
                for c in 0..n_clusters {
                    let d = squared_distance(row(i), &centroids[c * dim..(c + 1) * dim]);
                    if d < best_dist {
                        best_dist = d;
                        best = c;
                    }
                }
                if *slot != best {
                    changed = true;
                    *slot = best;
                }
                sizes[best] += 1;
            }

            // Re-seed empty clusters from the globally worst-fit point.
            while let Some(empty) = sizes.iter().position(|&s| s == 0) {
                let mut worst_row = None;
                let mut worst_dist = -1.0f32;
                for (i, &assigned) in assignments.iter().enumerate() {
                    if sizes[assigned] <= 1 {
                        continue;
                    }
                    let d = squared_distance(
                        row(i),
                        &centroids[assigned * dim..(assigned + 1) * dim],
                    );
                    if d > worst_dist {
                        worst_dist = d;
                        worst_row = Some(i);
                    }
                }
                let moved = worst_row.expect("count >= n_clusters guarantees a donor");
                sizes[assignments[moved]] -= 1;
                assignments[moved] = empty;
                sizes[empty] = 1;
                centroids[empty * dim..(empty + 1) * dim].copy_from_slice(row(moved));
                changed = true;
            }

            // Means in f64 for stable, deterministic centroids.
            let mut sums = vec![0.0f64; n_clusters * dim];
            for (i, &c) in assignments.iter().enumerate() {
                for (slot, &v) in sums[c * dim..(c + 1) * dim].iter_mut().zip(row(i)) {
                    *slot += v as f64;
                }
            }
            for c in 0..n_clusters {
                for d_i in 0..dim {
                    centroids[c * dim + d_i] = (sums[c * dim + d_i] / sizes[c] as f64) as f32;
                }
            }

            if !changed {
                break;
            }
        }

        let mut members: Vec<Vec<u64>> = vec![Vec::new(); n_clusters];
        for (i, &c) in assignments.iter().enumerate() {
            members[c].push(i as u64);
        }
        Ok(DenseIndex {
            dim: self.dim,
            ids: self.ids,
            vectors: self.vectors,
            structure: Structure::Clustered { centroids, members },
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.ids.len()
    }

    pub fn is_clustered(&self) -> bool {
        matches!(self.structure, Structure::Clustered { .. })
    }

    pub fn n_clusters(&self) -> Option<usize> {
        match &self.structure {
            Structure::Flat => None,
            Structure::Clustered { members, .. } => Some(members.len()),
        }
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    /// Cluster membership per row, for diagnostics and tests.
    pub fn assignments(&self) -> Option<Vec<usize>> {
        match &self.structure {
            Structure::Flat => None,
            Structure::Clustered { members, .. } => {
                let mut out = vec![0usize; self.ids.len()];
                for (c, rows) in members.iter().enumerate() {
                    for &r in rows {
                        out[r as usize] = c;
                    }
                }
                Some(out)
            }
        }
    }

    /// Top-k rows by inner product with the query. Flat indexes ignore
    /// `nprobe` and are exact; clustered indexes restrict the scan to the
    /// `nprobe` best clusters (all clusters when `nprobe` is absent). Ties
    /// break by id ascending; at most `min(k, candidates)` hits return.
    pub fn search(
        &self,
        query: &EmbeddingVector,
        k: usize,
        nprobe: Option<usize>,
    ) -> Result<Vec<SearchHit>> {
        if query.dim() != self.dim {
            return Err(Error::DimMismatch {
                context: "index search".into(),
                expected: self.dim,
                actual: query.dim(),
            });
        }
        if k == 0 {
            return Err(Error::InvalidInput("k must be at least 1".into()));
        }
        let q = query.values();
        let mut scored: Vec<(f32, u64)> = match &self.structure {
            Structure::Flat => (0..self.ids.len())
                .map(|i| (dot(self.row(i), q), self.ids[i]))
                .collect(),
            Structure::Clustered { centroids, members } => {
                let n_clusters = members.len();
                let nprobe = nprobe.unwrap_or(n_clusters);
                if nprobe == 0 || nprobe > n_clusters {
                    return Err(Error::InvalidConfig(format!(
                        "nprobe must be in 1..={n_clusters}, got {nprobe}"
                    )));
                }
                let mut by_centroid: Vec<(f32, usize)> = (0..n_clusters)
                    .map(|c| (dot(&centroids[c * self.dim..(c + 1) * self.dim], q), c))
                    .collect();
                by_centroid.sort_by(|a, b| {
                    b.0.partial_cmp(&a.0)
                        .unwrap_or(std::cmp::Ordering::Equal)
                        .then(a.1.cmp(&b.1))
                });
                by_centroid
                    .into_iter()
                    .take(nprobe)
                    .flat_map(|(_, c)| members[c].iter())
                    .map(|&r| (dot(self.row(r as usize), q), self.ids[r as usize]))
                    .collect()
            }
        };
        scored.sort_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.1.cmp(&b.1))
        });
        scored.truncate(k);
        Ok(scored
            .into_iter()
            .enumerate()
            .map(|(i, (ip, id))| SearchHit {
                id,
                inner_product: ip as f64,
                rank: i + 1,
            })
            .collect())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let structure_tag: u32 = if self.is_clustered() { 1 } else { 0 };
        out.extend_from_slice(&structure_tag.to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.ids.len() as u64).to_le_bytes());
        for id in &self.ids {
            out.extend_from_slice(&id.to_le_bytes());
        }
        for v in &self.vectors {
            out.extend_from_slice(&v.to_le_bytes());
        }
        if let Structure::Clustered { centroids, members } = &self.structure {
            out.extend_from_slice(&(members.len() as u32).to_le_bytes());
            for v in centroids {
                out.extend_from_slice(&v.to_le_bytes());
            }
            for m in members {
                out.extend_from_slice(&(m.len() as u64).to_le_bytes());
            }
            for m in members {
                for r in m {
                    out.extend_from_slice(&r.to_le_bytes());
                }
            }
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::util::atomic_write(path, &self.to_bytes())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cursor = FormatCursor { bytes, pos: 0 };
        let magic = cursor.take(8, "magic")?;
        if magic != MAGIC {
            return Err(Error::Format {
                offset: 0,
                message: format!("bad magic {magic:02x?}, expected {MAGIC:02x?}"),
            });
        }
        let version = cursor.u32("version")?;
        if version != VERSION {
            return Err(Error::Format {
                offset: 8,
                message: format!("unsupported version {version}"),
            });
        }
        let structure_tag = cursor.u32("structure")?;
        if structure_tag > 1 {
            return Err(Error::Format {
                offset: 12,
                message: format!("unknown structure tag {structure_tag}"),
            });
        }
        let dim = cursor.u32("dim")? as usize;
        if dim == 0 {
            return Err(Error::Format {
                offset: 16,
                message: "dim is 0".into(),
            });
        }
        let count = cursor.u64("count")? as usize;
        let mut ids = Vec::with_capacity(count);
        for _ in 0..count {
            ids.push(cursor.u64("ids")?);
        }
        let mut vectors = Vec::with_capacity(count * dim);
        for _ in 0..count * dim {
            vectors.push(cursor.f32("vectors")?);
        }
        let structure = if structure_tag == 0 {
            Structure::Flat
        } else {
            let n_clusters = cursor.u32("n_clusters")? as usize;
            if n_clusters == 0 || n_clusters > count {
                return Err(Error::Format {
                    offset: cursor.pos as u64 - 4,
                    message: format!("n_clusters {n_clusters} out of range for count {count}"),
                });
            }
            let mut centroids = Vec::with_capacity(n_clusters * dim);
            for _ in 0..n_clusters * dim {
                centroids.push(cursor.f32("centroids")?);
            }
            let mut sizes = Vec::with_capacity(n_clusters);
            for _ in 0..n_clusters {
                sizes.push(cursor.u64("cluster_sizes")? as usize);
            }
            if sizes.iter().sum::<usize>() != count {
                return Err(Error::Format {
                    offset: cursor.pos as u64,
                    message: "cluster sizes do not sum to count".into(),
                });
            }
            let mut members = Vec::with_capacity(n_clusters);
            let mut seen_rows = vec![false; count];
            for &size in &sizes {
                let mut cluster = Vec::with_capacity(size);
                for _ in 0..size {
                    let r = cursor.u64("cluster members")?;
                    if r as usize >= count || seen_rows[r as usize] {
                        return Err(Error::Format {
                            offset: cursor.pos as u64 - 8,
                            message: format!("invalid or repeated member row {r}"),
                        });
                    }
                    seen_rows[r as usize] = true;
                    cluster.push(r);
                }
                members.push(cluster);
            }
            Structure::Clustered { centroids, members }
        };
        if cursor.pos != bytes.len() {
            return Err(Error::Format {
                offset: cursor.pos as u64,
                message: format!("{} trailing bytes", bytes.len() - cursor.pos),
            });
        }
        if count == 0 {
            return Err(Error::Format {
                offset: 20,
                message: "index holds no rows".into(),
            });
        }
        Ok(DenseIndex {
            dim,
            ids,
            vectors,
            structure,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

struct FormatCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> FormatCursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Format {
                offset: self.pos as u64,
                message: format!("truncated while reading {what}"),
            });
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f32(&mut self, what: &str) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}
