//! Rating ingestion: binarization, item/user filtering, indexing into
//! per-domain sparse binary matrices, and the user-level and fold-in splits.

mod dataset;
mod io;
mod records;
mod split;

pub use dataset::{build_multidomain, DomainDataset, MultiDomainDataset, MAX_DOMAINS};
pub use io::{read_dataset_dir, read_tsv, write_dataset_dir, DatasetManifest, DomainStats};
pub use records::{binarize, filter_items, filter_users, RatingRecord, UserFilterScope};
pub use split::{fold_in_split, split_users, SplitSpec};
