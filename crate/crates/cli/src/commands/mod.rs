pub mod detect;
pub mod estimator;
pub mod eval;
pub mod pipeline;
pub mod simulate;
pub mod synth;
pub mod track;

/// Value of an option that the built-in defaults always fill.
pub(crate) fn d<T: Clone>(o: &Option<T>) -> T {
    o.clone().expect("option filled by defaults")
}
