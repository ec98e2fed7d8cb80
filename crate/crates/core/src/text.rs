//! Text descriptions, the distributional-semantic kernel and TF / TF-IDF
//! baselines.
//!
//! A description is a bag of `(term, frequency, unit word vector)` triplets.
//! The DS similarity of two descriptions is `F_a^T V_a V_b^T F_b`: every
//! pair of terms contributes the product of their frequencies times the
//! cosine of their word vectors. With mutually orthogonal word vectors it
//! reduces to the plain term-frequency inner product.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const ENGLISH_STOP_WORDS: &str = include_str!("stopwords_en.txt");

#[derive(Debug, Clone, Default)]
pub struct StopWords(HashSet<String>);

impl StopWords {
    pub fn english() -> Self {
        Self::from_lines(ENGLISH_STOP_WORDS)
    }

    pub fn empty() -> Self {
        Self::default()
    }

    /// One word per line. Entries with apostrophes also contribute their
    /// pieces (`don't` adds `don` and `t`) because tokens never contain them.
    pub fn from_lines(text: &str) -> Self {
        let mut set = HashSet::new();
        for line in text.lines() {
            let w = line.trim().to_lowercase();
            if w.is_empty() || w.starts_with('#') {
                continue;
            }
            for piece in w.split(|c: char| !c.is_alphanumeric()).filter(|p| !p.is_empty()) {
                set.insert(piece.to_string());
            }
            set.insert(w);
        }
        Self(set)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::from_lines(&text))
    }

    pub fn contains(&self, w: &str) -> bool {
        self.0.contains(w)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Lowercase, split on non-alphanumerics, drop pure numbers and stop words,
/// and count. Terms come back in first-occurrence order.
pub fn tokenize(raw_text: &str, stop_words: &StopWords) -> Result<Vec<(String, u32)>> {
    let lowered = raw_text.to_lowercase();
    let mut order: Vec<(String, u32)> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for tok in lowered.split(|c: char| !c.is_alphanumeric()) {
        if tok.is_empty() || tok.chars().all(char::is_numeric) || stop_words.contains(tok) {
            continue;
        }
        match index.get(tok) {
            Some(&i) => order[i].1 += 1,
            None => {
                index.insert(tok.to_string(), order.len());
                order.push((tok.to_string(), 1));
            }
        }
    }
    if order.is_empty() {
        return Err(Error::EmptyAfterFiltering);
    }
    Ok(order)
}

/// Word vectors, stored at unit L2 norm.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            vectors: HashMap::new(),
        }
    }

    /// Insert a word, normalizing its vector. Zero vectors are rejected.
    pub fn insert(&mut self, word: &str, mut vector: Vec<f64>) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: vector.len(),
            });
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue(format!("embedding of `{word}`")));
        }
        let norm = vector.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::InvalidParameter(format!("embedding of `{word}` is zero")));
        }
        vector.iter_mut().for_each(|v| *v /= norm);
        self.vectors.insert(word.to_lowercase(), vector);
        Ok(())
    }

    /// Plain-text `word v1 ... vK` lines. A leading `count dim` header line,
    /// as written by word2vec, is skipped.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut table: Option<EmbeddingTable> = None;
        for (ln, line) in text.lines().enumerate() {
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.is_empty() {
                continue;
            }
            if ln == 0 && parts.len() == 2 && parts.iter().all(|p| p.parse::<u64>().is_ok()) {
                continue;
            }
            if parts.len() < 2 {
                return Err(Error::malformed(path, format!("line {}: no vector", ln + 1)));
            }
            let vec = parts[1..]
                .iter()
                .map(|p| {
                    p.parse::<f64>().map_err(|_| {
                        Error::malformed(path, format!("line {}: `{p}` is not a number", ln + 1))
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            let t = table.get_or_insert_with(|| EmbeddingTable::new(vec.len()));
            t.insert(parts[0], vec).map_err(|e| match e {
                Error::DimensionMismatch { expected, actual } => Error::malformed(
                    path,
                    format!("line {}: {actual} values, expected {expected}", ln + 1),
                ),
                other => other,
            })?;
        }
        table.ok_or_else(|| Error::malformed(path, "no embeddings"))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.vectors.get(word).map(Vec::as_slice)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TextDescription {
    terms: Vec<String>,
    freqs: DVector<f64>,
    vectors: DMatrix<f64>,
    oov: usize,
    /// `V^T F`, computed once so the kernel is exactly symmetric.
    projection: DVector<f64>,
}

impl TextDescription {
    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    /// `F`, length `M`.
    pub fn frequencies(&self) -> &DVector<f64> {
        &self.freqs
    }

    /// `V`, `M x K`, unit-norm rows.
    pub fn vectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    /// Tokens dropped because they had no embedding.
    pub fn out_of_vocabulary(&self) -> usize {
        self.oov
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    /// Build directly from triplets; vectors are normalized.
    pub fn from_triplets(triplets: &[(String, f64, Vec<f64>)]) -> Result<Self> {
        let m = triplets.len();
        if m == 0 {
            return Err(Error::NoEmbeddedTerms);
        }
        let k = triplets[0].2.len();
        let mut seen = BTreeSet::new();
        let mut vectors = DMatrix::zeros(m, k);
        for (i, (term, f, v)) in triplets.iter().enumerate() {
            if !seen.insert(term.clone()) {
                return Err(Error::InvalidParameter(format!("duplicate term `{term}`")));
            }
            if !(f.is_finite() && *f > 0.0) {
                return Err(Error::InvalidParameter(format!("frequency of `{term}` must be > 0")));
            }
            if v.len() != k {
                return Err(Error::DimensionMismatch {
                    expected: k,
                    actual: v.len(),
                });
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if !(norm > 0.0 && norm.is_finite()) {
                return Err(Error::InvalidParameter(format!("vector of `{term}` is degenerate")));
            }
            for (j, x) in v.iter().enumerate() {
                vectors[(i, j)] = x / norm;
            }
        }
        let freqs = DVector::from_iterator(m, triplets.iter().map(|t| t.1));
        Ok(Self::assemble(
            triplets.iter().map(|t| t.0.clone()).collect(),
            freqs,
            vectors,
            0,
        ))
    }

    fn assemble(terms: Vec<String>, freqs: DVector<f64>, vectors: DMatrix<f64>, oov: usize) -> Self {
        let projection = vectors.tr_mul(&freqs);
        Self {
            terms,
            freqs,
            vectors,
            oov,
            projection,
        }
    }

    /// Same description with every frequency multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        Self::assemble(self.terms.clone(), &self.freqs * s, self.vectors.clone(), self.oov)
    }
}

/// Drop out-of-vocabulary terms and assemble `F` and `V` in token order.
pub fn build_description(tokens: &[(String, u32)], table: &EmbeddingTable) -> Result<TextDescription> {
    if tokens.is_empty() {
        return Err(Error::EmptyAfterFiltering);
    }
    let kept: Vec<(&String, u32, &[f64])> = tokens
        .iter()
        .filter_map(|(t, f)| table.get(t).map(|v| (t, *f, v)))
        .collect();
    if kept.is_empty() {
        return Err(Error::NoEmbeddedTerms);
    }
    let m = kept.len();
    let k = table.dim();
    let mut vectors = DMatrix::zeros(m, k);
    for (i, (_, _, v)) in kept.iter().enumerate() {
        for (j, x) in v.iter().enumerate() {
            vectors[(i, j)] = *x;
        }
    }
    let freqs = DVector::from_iterator(m, kept.iter().map(|(_, f, _)| *f as f64));
    let terms = kept.iter().map(|(t, _, _)| (*t).clone()).collect();
    Ok(TextDescription::assemble(terms, freqs, vectors, tokens.len() - m))
}

/// `F_a^T V_a V_b^T F_b`.
pub fn ds_kernel(a: &TextDescription, b: &TextDescription) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            actual: b.dim(),
        });
    }
    Ok(a.projection.dot(&b.projection))
}

/// Cosine-normalized variant: `g(a,b) / sqrt(g(a,a) g(b,b))`, 0 when either
/// self-similarity vanishes.
pub fn ds_kernel_normalized(a: &TextDescription, b: &TextDescription) -> Result<f64> {
    let ab = ds_kernel(a, b)?;
    let aa = a.projection.norm_squared();
    let bb = b.projection.norm_squared();
    if aa == 0.0 || bb == 0.0 {
        return Ok(0.0);
    }
    Ok(ab / (aa * bb).sqrt())
}

/// Document-term matrix over a sorted union vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct TermMatrix {
    pub vocabulary: Vec<String>,
    /// `documents x vocabulary`.
    pub matrix: DMatrix<f64>,
}

/// Raw term-frequency rows (no weighting, no normalization).
pub fn tf_matrix(descriptions: &[Vec<(String, u32)>]) -> Result<TermMatrix> {
    if descriptions.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let vocab: BTreeMap<&str, usize> = {
        let words: BTreeSet<&str> = descriptions
            .iter()
            .flat_map(|d| d.iter().map(|(t, _)| t.as_str()))
            .collect();
        words.into_iter().enumerate().map(|(i, w)| (w, i)).collect()
    };
    let mut m = DMatrix::zeros(descriptions.len(), vocab.len());
    for (i, d) in descriptions.iter().enumerate() {
        for (t, f) in d {
            m[(i, vocab[t.as_str()])] += *f as f64;
        }
    }
    Ok(TermMatrix {
        vocabulary: vocab.keys().map(|s| s.to_string()).collect(),
        matrix: m,
    })
}

/// TF-IDF rows with `idf = ln(n_docs / df)`, or `ln((1 + n) / (1 + df)) + 1`
/// when `smooth`. Non-zero rows are L2-normalized.
pub fn tfidf_matrix(descriptions: &[Vec<(String, u32)>], smooth: bool) -> Result<TermMatrix> {
    let TermMatrix { vocabulary, mut matrix } = tf_matrix(descriptions)?;
    let n_docs = descriptions.len() as f64;
    for j in 0..matrix.ncols() {
        let df = matrix.column(j).iter().filter(|&&v| v > 0.0).count() as f64;
        let idf = if smooth {
            ((1.0 + n_docs) / (1.0 + df)).ln() + 1.0
        } else {
            (n_docs / df).ln()
        };
        matrix.column_mut(j).scale_mut(idf);
    }
    for mut row in matrix.row_iter_mut() {
        let norm = row.norm();
        if norm > 0.0 {
            row /= norm;
        }
    }
    Ok(TermMatrix { vocabulary, matrix })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(v: &[(&str, u32)]) -> Vec<(String, u32)> {
        v.iter().map(|(t, f)| (t.to_string(), *f)).collect()
    }

    #[test]
    fn tokenize_example() {
        let stop = StopWords::from_lines("the");
        let t = tokenize("The red bird. The bird.", &stop).unwrap();
        assert_eq!(t, toks(&[("red", 1), ("bird", 2)]));
    }

    #[test]
    fn tokenize_empty() {
        assert!(matches!(
            tokenize("", &StopWords::english()),
            Err(Error::EmptyAfterFiltering)
        ));
        assert!(matches!(
            tokenize("the of 1984 and", &StopWords::english()),
            Err(Error::EmptyAfterFiltering)
        ));
    }

    #[test]
    fn tokenize_unicode_and_numbers() {
        let t = tokenize("Ärger über 42 Vögel, 3d-Modell", &StopWords::empty()).unwrap();
        assert_eq!(
            t,
            toks(&[("ärger", 1), ("über", 1), ("vögel", 1), ("3d", 1), ("modell", 1)])
        );
    }

    #[test]
    fn bundled_list_drops_contraction_pieces() {
        let sw = StopWords::english();
        assert!(sw.len() > 170);
        assert!(sw.contains("don"));
        assert!(sw.contains("the"));
    }

    fn table() -> EmbeddingTable {
        let mut t = EmbeddingTable::new(3);
        t.insert("red", vec![2.0, 0.0, 0.0]).unwrap();
        t.insert("bird", vec![0.0, 1.0, 1.0]).unwrap();
        t
    }

    #[test]
    fn build_single_term() {
        let d = build_description(&toks(&[("red", 1)]), &table()).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.frequencies().as_slice(), &[1.0]);
        assert!((d.vectors().row(0).norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn build_all_oov() {
        assert!(matches!(
            build_description(&toks(&[("zebra", 2)]), &table()),
            Err(Error::NoEmbeddedTerms)
        ));
    }

    #[test]
    fn build_mixed_vocabulary() {
        let d = build_description(&toks(&[("zebra", 2), ("bird", 3), ("red", 1), ("x", 1)]), &table())
            .unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.out_of_vocabulary(), 2);
        assert_eq!(d.terms(), &["bird".to_string(), "red".to_string()]);
        assert_eq!(d.frequencies().as_slice(), &[3.0, 1.0]);
    }

    #[test]
    fn ds_identical_single_term_is_one() {
        let d = build_description(&toks(&[("bird", 1)]), &table()).unwrap();
        assert!((ds_kernel(&d, &d).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn ds_disjoint_orthonormal_is_zero() {
        let a = build_description(&toks(&[("red", 4)]), &table()).unwrap();
        let b = build_description(&toks(&[("bird", 2)]), &table()).unwrap();
        assert_eq!(ds_kernel(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn ds_dimension_mismatch() {
        let a = TextDescription::from_triplets(&[("a".into(), 1.0, vec![1.0, 0.0])]).unwrap();
        let b = TextDescription::from_triplets(&[("a".into(), 1.0, vec![1.0, 0.0, 0.0])]).unwrap();
        assert!(matches!(ds_kernel(&a, &b), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn normalized_ds_self_similarity_is_one() {
        let d = build_description(&toks(&[("red", 3), ("bird", 1)]), &table()).unwrap();
        assert!((ds_kernel_normalized(&d, &d).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn embedding_load_skips_header_and_normalizes() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("emb.txt");
        fs::write(&p, "2 3\nred 3 0 4\nBird 0 0 2\n").unwrap();
        let t = EmbeddingTable::load(&p).unwrap();
        assert_eq!(t.dim(), 3);
        assert_eq!(t.len(), 2);
        assert_eq!(t.get("red").unwrap(), &[0.6, 0.0, 0.8]);
        assert_eq!(t.get("bird").unwrap(), &[0.0, 0.0, 1.0]);
        fs::write(&p, "red 1 0\nbird 1 0 0\n").unwrap();
        assert!(matches!(EmbeddingTable::load(&p), Err(Error::MalformedFile { .. })));
    }

    #[test]
    fn tfidf_common_term_column_is_zero() {
        let docs = vec![
            toks(&[("bird", 1), ("red", 2)]),
            toks(&[("bird", 3), ("blue", 1)]),
        ];
        let m = tfidf_matrix(&docs, false).unwrap();
        let j = m.vocabulary.iter().position(|w| w == "bird").unwrap();
        assert!(m.matrix.column(j).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn tfidf_single_document_is_zero() {
        let m = tfidf_matrix(&[toks(&[("bird", 1), ("red", 2)])], false).unwrap();
        assert!(m.matrix.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn tfidf_hand_computed_table() {
        // d0: red x2, bird x1; d1: bird x1, wing x1; d2: wing x3
        // df: bird 2, red 1, wing 2; idf: ln(3/2), ln 3, ln(3/2)
        let docs = vec![
            toks(&[("red", 2), ("bird", 1)]),
            toks(&[("bird", 1), ("wing", 1)]),
            toks(&[("wing", 3)]),
        ];
        let m = tfidf_matrix(&docs, false).unwrap();
        assert_eq!(m.vocabulary, vec!["bird", "red", "wing"]);
        let a = 1.5f64.ln();
        let b = 3f64.ln();
        let r0 = [a, 2.0 * b, 0.0];
        let n0 = (r0[0] * r0[0] + r0[1] * r0[1]).sqrt();
        let expected = [
            [r0[0] / n0, r0[1] / n0, 0.0],
            [
                std::f64::consts::FRAC_1_SQRT_2,
                0.0,
                std::f64::consts::FRAC_1_SQRT_2,
            ],
            [0.0, 0.0, 1.0],
        ];
        for i in 0..3 {
            for j in 0..3 {
                assert!((m.matrix[(i, j)] - expected[i][j]).abs() < 1e-12, "({i},{j})");
            }
        }
    }

    #[test]
    fn tfidf_empty_corpus() {
        assert!(matches!(tfidf_matrix(&[], false), Err(Error::EmptyCorpus)));
    }

    #[test]
    fn smoothed_idf_is_positive() {
        let docs = vec![toks(&[("bird", 1)]), toks(&[("bird", 1)])];
        let m = tfidf_matrix(&docs, true).unwrap();
        assert!(m.matrix.iter().all(|&v| v > 0.0));
    }
}
