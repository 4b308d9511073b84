//! File formats: the int8 signal container, the columnar dataset adapter,
//! synthetic data, binary artifacts and CSV/JSON-lines tables.

pub mod artifacts;
pub mod columnar;
pub mod sigb;
pub mod synth;
pub mod tables;

pub use artifacts::{load_clusters, load_model, save_clusters, save_model, ClusterArtifact};
pub use sigb::{read_sigb, write_sigb, SigbReader, SigbWriter};
pub use synth::{PlantedPulse, SynthScenario};
