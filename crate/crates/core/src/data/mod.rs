//! Sensor streams, windowing, normalization, splits and the synthetic corpus.

mod split;
mod stream;
mod synth;
mod window;

pub use split::{balanced_sample, loso_split, Fold, FoldOptions, SplitMode, SplitPlan};
pub use stream::{decimate, load_csv, parse_csv, save_csv, write_csv, SensorStream};
pub use synth::{class_waveform, synth_generate, synth_generate_with, ClassWaveform, SynthConfig};
pub use window::{normalize, segment, segment_all, window_geometry, Example, NormStats, WindowedDataset};
