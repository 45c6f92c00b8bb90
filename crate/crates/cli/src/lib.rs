//! Library side of the `msmcs` command: manifests, result bundles and
//! comparisons.

pub mod bundle;
pub mod compare;
pub mod manifest;

pub use bundle::{run_manifest, ResultBundle, SavedBundle, HISTOGRAM_HEADER};
pub use compare::{compare, CompareReport, Reference};
pub use manifest::{parse_manifest, ManifestFile, RunManifest};
