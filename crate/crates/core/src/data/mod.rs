//! MNIST ingestion and continual-learning task construction.

mod encode;
mod idx;
mod source;
mod tasks;
mod transform;

pub use encode::{binarize, encode_item, one_hot_bipolar, DEFAULT_THRESHOLD};
pub use idx::{parse_idx, read_idx_file, read_maybe_gzip, IdxTensor, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC};
pub use source::{
    locate, resolve_data_dir, sha256_hex, sha256_reader, verify_file, verify_mnist_dir,
    CanonicalFile, RawImageSet, DATA_DIR_ENV, MNIST_FILES,
};
pub use tasks::{
    build_task_sequence, splitmix64, task_seed, SequenceSpec, TaskDataset, BALANCE_GUARD_ITEMS,
};
pub use transform::{
    invert_permutation, is_bijection, make_task_transform, permute, rotate_nearest, TaskTransform,
    TransformKind,
};
