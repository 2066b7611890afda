//! ROUGE, the lead-3 baseline, repetition / novelty statistics, `p_gen`
//! statistics, and corpus reports.

mod report;
mod rouge;
mod stats;

pub use report::{evaluate, score_example, write_novelty_csv, write_repetition_csv, EvalReport, ExampleScores, RougeSet};
pub use rouge::{lcs_len, lead3, rouge_l, rouge_l_plain, rouge_n, RougeScore};
pub use stats::{novelty_stats, pgen_stats, repetition_stats, NoveltyReport, PgenStats, Ratio, RepetitionReport, MAX_N};
