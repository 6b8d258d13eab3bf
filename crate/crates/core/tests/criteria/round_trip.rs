use protoml_core::recorder::Store;
use protoml_core::{canonical_hash, parse_notebook, ContentHash, Notebook};

use super::{common, Outcome};

/// Every fixture survives record then checkout, also from a freshly opened store.
pub fn record_checkout() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut store = Store::open(dir.path()).unwrap();
    let mut recorded = Vec::new();
    for (name, nb) in common::all_fixtures() {
        let snap = store.record(&nb, None, Some(&name)).map_err(|e| format!("{name}: {e}"))?;
        ensure_eq!(snap.content_hash, canonical_hash(&nb), "{name}: content hash");
        ensure!(store.checkout(&snap.node_id).ok() == Some(nb.clone()), "{name}: checkout differs");
        recorded.push((name, snap.node_id, nb));
    }
    let mut fresh = Store::open(dir.path()).unwrap();
    for (name, id, nb) in &recorded {
        ensure!(fresh.checkout(id).ok().as_ref() == Some(nb), "{name}: checkout from reopened store differs");
    }
    Ok(format!("{} fixtures", recorded.len()))
}

/// The hash does not depend on the serializer, file formatting or a re-export.
pub fn hash_stability() -> Outcome {
    let fixtures = common::all_fixtures();
    for (name, nb) in &fixtures {
        let bytes = std::fs::read(common::fixtures_dir().join(name)).unwrap();
        let again = parse_notebook(&bytes).map_err(|e| format!("{name}: {e}"))?;
        ensure_eq!(canonical_hash(nb), canonical_hash(&again), "{name}: reparse");

        // serde_json's own writer sorts object keys too; it must produce the same bytes
        let independent = serde_json::to_string(&nb.canonical_value()).unwrap();
        ensure_eq!(independent, nb.to_canonical_string(), "{name}: independent serializer");
        ensure_eq!(ContentHash::of_bytes(independent.as_bytes()), canonical_hash(nb), "{name}: hash of independent bytes");
        ensure!(Notebook::from_canonical_str(&nb.to_canonical_string()).ok().as_ref() == Some(nb), "{name}: canonical reparse");

        let value: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
        let compact = serde_json::to_vec(&value).unwrap();
        ensure_eq!(canonical_hash(&parse_notebook(&compact).unwrap()), canonical_hash(nb), "{name}: compact file");

        let back = parse_notebook(nb.to_ipynb().as_bytes()).map_err(|e| format!("{name}: export: {e}"))?;
        ensure!(&back == nb, "{name}: ipynb export reparses differently");
    }
    Ok(format!("{} fixtures", fixtures.len()))
}
