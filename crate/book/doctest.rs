// mdbook can't run listings that depend on workspace crates, so each chapter
// is included as the docs of an empty module and `cargo test --doc` compiles
// and runs its code blocks. One module per chapter keeps failures traceable
// to the file they came from.

#[doc = include_str!("src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("src/autodiff.md")]
pub mod autodiff {}
#[doc = include_str!("src/views.md")]
pub mod views {}
#[doc = include_str!("src/losses.md")]
pub mod losses {}
#[doc = include_str!("src/training.md")]
pub mod training {}
#[doc = include_str!("src/metrics.md")]
pub mod metrics {}
#[doc = include_str!("src/formats.md")]
pub mod formats {}
#[doc = include_str!("src/cli.md")]
pub mod cli {}
#[doc = include_str!("src/datasets.md")]
pub mod datasets {}
