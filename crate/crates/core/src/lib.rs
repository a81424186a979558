//! Simulation and signal-processing toolkit for an acoustic-waveguide
//! tactile tire: a rangefinder fires pulses down a tube wrapped around a
//! rolling wheel, and indentations of the tube reflect them back.

pub mod acoustics;
pub mod design;
pub mod model;
pub mod scene;
pub mod dsp;
pub mod localize;
pub mod classify;
pub mod telemetry;
pub mod experiment;
