use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use num_bigint::BigInt;
use protoml_core::recommender::{tokenize, CellRef, Recommendation, Target, TokenBag, VectorIndex};
use protoml_core::{Cell, Notebook};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use super::{common, Outcome};

/// Index scores against the exact oracle.
pub const SCORE_TOLERANCE: f64 = 1e-12;
/// Self-similarity of a cell or notebook.
pub const SELF_TOLERANCE: f64 = 1e-9;
pub const LATENCY_BUDGET: Duration = Duration::from_millis(100);

/// Fixed-point reals with 60 decimal digits, enough that every comparison
/// below is decided far above the rounding error.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Fx(pub BigInt);

pub fn scale() -> BigInt {
    BigInt::from(10).pow(60)
}

impl Fx {
    pub fn int(n: i64) -> Fx {
        Fx(BigInt::from(n) * scale())
    }
    pub fn ratio(p: i64, q: i64) -> Fx {
        Fx(BigInt::from(p) * scale() / BigInt::from(q))
    }
    pub fn add(&self, o: &Fx) -> Fx {
        Fx(&self.0 + &o.0)
    }
    pub fn mul(&self, o: &Fx) -> Fx {
        Fx(&self.0 * &o.0 / scale())
    }
    pub fn div(&self, o: &Fx) -> Fx {
        Fx(&self.0 * scale() / &o.0)
    }
    pub fn sqrt(&self) -> Fx {
        Fx((&self.0 * scale()).sqrt())
    }
    pub fn is_zero(&self) -> bool {
        self.0 == BigInt::from(0)
    }
    /// ln(p/q) = 2 atanh((p - q) / (p + q)).
    pub fn ln_ratio(p: i64, q: i64) -> Fx {
        let z = Fx::ratio(p - q, p + q);
        let z2 = z.mul(&z);
        let mut power = z.clone();
        let mut sum = Fx(BigInt::from(0));
        let mut k = 1i64;
        while !power.is_zero() {
            sum = sum.add(&Fx(&power.0 / BigInt::from(k)));
            power = power.mul(&z2);
            k += 2;
        }
        Fx(sum.0 * 2)
    }
    pub fn to_f64(&self) -> f64 {
        let digits = &self.0 / BigInt::from(10).pow(44);
        digits.to_string().parse::<f64>().unwrap() / 1e16
    }
}

pub type Vector = BTreeMap<String, Fx>;

pub struct Oracle {
    n_docs: i64,
    df: BTreeMap<String, i64>,
}

impl Oracle {
    pub fn new(cells: &[TokenBag]) -> Oracle {
        let mut df = BTreeMap::new();
        for bag in cells {
            for t in bag.keys() {
                *df.entry(t.clone()).or_insert(0) += 1;
            }
        }
        Oracle { n_docs: cells.len() as i64, df }
    }

    pub fn idf(&self, token: &str) -> Fx {
        let df = self.df.get(token).copied().unwrap_or(0);
        Fx::ln_ratio(1 + self.n_docs, 1 + df).add(&Fx::int(1))
    }

    pub fn weights(&self, bag: &TokenBag) -> Vector {
        let total: i64 = bag.values().map(|&c| i64::from(c)).sum();
        bag.iter().map(|(t, &c)| (t.clone(), Fx::ratio(i64::from(c), total).mul(&self.idf(t)))).collect()
    }
}

pub fn norm(v: &Vector) -> Fx {
    v.values().fold(Fx::int(0), |acc, w| acc.add(&w.mul(w))).sqrt()
}

pub fn cosine(a: &Vector, b: &Vector) -> Fx {
    let dot = a.iter().filter_map(|(t, w)| b.get(t).map(|x| w.mul(x))).fold(Fx::int(0), |acc, x| acc.add(&x));
    let (na, nb) = (norm(a), norm(b));
    if na.is_zero() || nb.is_zero() {
        return Fx::int(0);
    }
    dot.div(&na.mul(&nb))
}

/// Token-count-weighted sum of unit cell vectors.
pub fn aggregate(cells: &[(i64, Vector)]) -> Vector {
    let mut sum = Vector::new();
    for (count, v) in cells {
        let n = norm(v);
        if n.is_zero() {
            continue;
        }
        for (t, w) in v {
            let term = w.div(&n).mul(&Fx::int(*count));
            let entry = sum.entry(t.clone()).or_insert(Fx::int(0));
            *entry = entry.add(&term);
        }
    }
    sum
}

pub fn ranked(mut scored: Vec<(Fx, Target)>) -> Vec<(Fx, Target)> {
    scored.retain(|(s, _)| !s.is_zero());
    scored.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
    scored
}

/// Same targets in the same order, scores within `SCORE_TOLERANCE`.
pub fn compare(actual: &[Recommendation], expected: &[(Fx, Target)], k: usize) -> Result<(), String> {
    let expected: Vec<_> = expected.iter().take(k).collect();
    ensure_eq!(actual.len(), expected.len(), "result count");
    for (i, (rec, (score, target))) in actual.iter().zip(expected).enumerate() {
        ensure_eq!(rec.rank, i + 1, "rank numbering");
        ensure_eq!(&rec.target, target, "rank {}", i + 1);
        ensure!((rec.score - score.to_f64()).abs() < SCORE_TOLERANCE, "rank {}: {} vs {}", i + 1, rec.score, score.to_f64());
    }
    Ok(())
}

pub fn toy_corpus() -> Vec<(String, Notebook)> {
    let nb = |cells: &[(&str, &str)]| Notebook::new(cells.iter().map(|(id, s)| Cell::code(*id, *s)).collect());
    vec![
        (
            "vision.ipynb".into(),
            nb(&[
                ("load", "images = load_images(image_dir)\nlabels = load_labels(label_file)"),
                ("model", "model = build_cnn(input_shape)\nmodel.fit(images, labels, epochs=epochs)"),
                ("eval", "score = model.evaluate(test_images, test_labels)"),
            ]),
        ),
        (
            "churn.ipynb".into(),
            nb(&[
                ("load", "frame = read_csv(data_path)\nlabels = frame.pop(label_column)"),
                ("split", "train_frame, test_frame = train_test_split(frame)"),
                ("model", "model = LogisticRegression()\nmodel.fit(train_frame, train_labels)"),
                ("plot", "plot_roc(model, test_frame, test_labels)"),
            ]),
        ),
        (
            "text.ipynb".into(),
            nb(&[
                ("load", "texts = read_text_file(data_path)"),
                ("vec", "vectorizer = TfidfVectorizer()\nmatrix = vectorizer.fit_transform(texts)"),
                ("model", "model = naive_bayes(matrix, labels)"),
            ]),
        ),
    ]
}

/// Cell and notebook rankings on the toy corpus equal the exact oracle.
pub fn toy_oracle() -> Outcome {
    let corpus = toy_corpus();
    let index = VectorIndex::build(corpus.clone(), "2024-01-01T00:00:00Z").unwrap();
    let mut docs: Vec<(CellRef, TokenBag)> = Vec::new();
    for (path, nb) in &corpus {
        for c in &nb.cells {
            docs.push((CellRef { notebook: path.clone(), cell_id: c.cell_id.clone() }, tokenize(&c.source)));
        }
    }
    let oracle = Oracle::new(&docs.iter().map(|d| d.1.clone()).collect::<Vec<_>>());
    let doc_vectors: Vec<(CellRef, Vector)> = docs.iter().map(|(r, b)| (r.clone(), oracle.weights(b))).collect();

    let mut queries: Vec<String> = corpus.iter().flat_map(|(_, nb)| nb.cells.iter().map(|c| c.source.clone())).collect();
    queries.push("model.fit(features, labels)".into());
    queries.push("plot_confusion(model, unseen_token_here)".into());
    queries.push("texts = read_csv(data_path)".into());
    queries.push("nothing_matches_whatsoever".into());

    let mut compared = 0;
    for q in &queries {
        let qv = oracle.weights(&tokenize(q));
        let expected = ranked(doc_vectors.iter().map(|(r, v)| (cosine(&qv, v), Target::Cell(r.clone()))).collect());
        for k in [1, 3, 100] {
            compare(&index.recommend_cells(q, k, None), &expected, k).map_err(|e| format!("cell query {q:?}, k={k}: {e}"))?;
            compared += 1;
        }
    }

    let nb_vector = |nb: &Notebook| {
        let cells: Vec<(i64, Vector)> = nb
            .code_cells()
            .map(|(_, c)| {
                let bag = tokenize(&c.source);
                (bag.values().map(|&n| i64::from(n)).sum(), oracle.weights(&bag))
            })
            .collect();
        aggregate(&cells)
    };
    let indexed: Vec<(String, Vector)> = corpus.iter().map(|(p, nb)| (p.clone(), nb_vector(nb))).collect();
    let mut nb_queries: Vec<Notebook> = corpus.iter().map(|c| c.1.clone()).collect();
    nb_queries.push(Notebook::new(vec![
        Cell::code("q1", "frame = read_csv(data_path)"),
        Cell::code("q2", "model.fit(frame, brand_new_labels)"),
    ]));
    for (i, q) in nb_queries.iter().enumerate() {
        let qv = nb_vector(q);
        let expected = ranked(indexed.iter().map(|(p, v)| (cosine(&qv, v), Target::Notebook { notebook: p.clone() })).collect());
        compare(&index.recommend_notebooks(q, 10, None), &expected, 10).map_err(|e| format!("notebook query {i}: {e}"))?;
        compared += 1;
    }
    Ok(format!("{compared} rankings within {SCORE_TOLERANCE:e}"))
}

pub fn fixture_index() -> VectorIndex {
    VectorIndex::build(common::all_fixtures(), "2024-01-01T00:00:00Z").unwrap()
}

/// Every fixture cell with tokens, and every fixture notebook, ranks itself first at 1.0.
pub fn self_retrieval() -> Outcome {
    let index = fixture_index();
    let fixtures: BTreeMap<String, Notebook> = common::all_fixtures().into_iter().collect();
    let mut cells = 0;
    for cv in index.cell_vectors() {
        if cv.vector.norm == 0.0 {
            // no tokens, so no direction to compare against
            continue;
        }
        let source = &fixtures[&cv.source_ref.notebook].cell(&cv.source_ref.cell_id).unwrap().source;
        let recs = index.recommend_cells(source, 1, None);
        ensure!(recs.first().map(|r| &r.target) == Some(&Target::Cell(cv.source_ref.clone())), "{:?} not first", cv.source_ref);
        ensure!((recs[0].score - 1.0).abs() < SELF_TOLERANCE, "{:?} scored {}", cv.source_ref, recs[0].score);
        cells += 1;
    }
    ensure!(cells >= 80, "only {cells} cells checked");
    let mut notebooks = 0;
    for (path, nb) in &fixtures {
        let recs = index.recommend_notebooks(nb, 3, None);
        let me = Target::Notebook { notebook: path.clone() };
        if index.notebook_vector(path).unwrap().entries.is_empty() {
            ensure!(recs.iter().all(|r| r.target != me), "{path}: empty notebook retrieved");
            continue;
        }
        ensure!(recs.first().map(|r| &r.target) == Some(&me), "{path} not first");
        ensure!((recs[0].score - 1.0).abs() < SELF_TOLERANCE, "{path} scored {}", recs[0].score);
        let excluded = index.recommend_notebooks(nb, 30, Some(path));
        ensure!(excluded.iter().all(|r| r.target != me), "{path}: exclusion ignored");
        notebooks += 1;
    }
    Ok(format!("{cells} cells, {notebooks} notebooks at 1.0 within {SELF_TOLERANCE:e}"))
}

const VOCAB_SIZE: usize = 2000;

pub fn synthetic_source(rng: &mut StdRng) -> String {
    (0..rng.gen_range(3..12))
        .map(|_| format!("v{}_w{} = f{}(a{})", rng.gen_range(0..VOCAB_SIZE), rng.gen_range(0..VOCAB_SIZE), rng.gen_range(0..200), rng.gen_range(0..VOCAB_SIZE)))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Median cell query latency over a 10,000-cell index.
pub fn latency_10k() -> Outcome {
    let mut rng = StdRng::seed_from_u64(10_000);
    let corpus: Vec<(String, Notebook)> = (0..100)
        .map(|n| {
            let cells = (0..100).map(|c| Cell::code(format!("c{c}"), synthetic_source(&mut rng))).collect();
            (format!("nb{n:03}.ipynb"), Notebook::new(cells))
        })
        .collect();
    let index = VectorIndex::build(corpus, "t").unwrap();
    ensure_eq!(index.n_docs, 10_000, "indexed cells");
    let mut times = Vec::new();
    for _ in 0..21 {
        let q = synthetic_source(&mut rng);
        let start = Instant::now();
        let recs = index.recommend_cells(&q, 10, None);
        times.push(start.elapsed());
        ensure!(!recs.is_empty(), "query returned nothing");
    }
    times.sort();
    let median = times[times.len() / 2];
    ensure!(median < LATENCY_BUDGET, "median {median:?} over {LATENCY_BUDGET:?}");
    Ok(format!("median {median:?} over 10000 cells (budget {LATENCY_BUDGET:?})"))
}
