//! Evaluation metrics: TEDn on MusicXML trees, CER/SER/LER on text, and
//! OMR-NED on measure symbol sequences.

pub mod omrned;
pub mod seq;
pub mod ted;

pub use omrned::{
    extract_measures, measure_cost, omr_ned, CostTable, MeasureSymbols, OmrNedError, Symbol, SymbolCategory,
};
pub use seq::{error_rate, levenshtein, SeqError, SymbolLevel};
pub use ted::{tedn, tedn_with_costs, tree_edit_distance, EditCosts, TedError, TednOutcome};
