//! Residential EV charging load estimation from interval smart-meter data.
//!
//! Two estimation paths are provided:
//!
//! 1. **Aggregate constant-load sessions** ([`rates`], [`sessions`]):
//!    weighted least squares over line-fuse peak data recovers the average
//!    non-EV and EV meter powers; charge-time statistics read off the
//!    EV/non-EV load-difference profile drive log-normal or gamma session
//!    sampling with a truncated-exponential rated-power model and a battery
//!    capacity cap.
//! 2. **Baseline subtraction plus KDE Monte Carlo** ([`extract`], [`kde`],
//!    [`scenario`]): the non-EV baseline is normalized, valley-aligned, and
//!    subtracted from each EV meter to isolate charging events; kernel
//!    density models fitted to the event statistics drive an annual fleet
//!    simulation with a two-phase taper charging profile.
//!
//! Numeric kernels are generic over the [`Real`] scalar; the aliases at the
//! crate root fix `f64`, which is what the CLI uses.

pub mod data;
pub mod error;
pub mod extract;
pub mod grid;
pub mod io;
pub mod kde;
pub mod rates;
pub mod rng;
pub mod scalar;
pub mod scenario;
pub mod sessions;
mod stats;
pub mod synth;

pub use error::{Error, Result};
pub use grid::TimeGrid;
pub use scalar::Real;

pub type MeterSeries = data::MeterSeries<f64>;
pub type DailyProfile = data::DailyProfile<f64>;
pub type LineFuseRecord = data::LineFuseRecord<f64>;

pub type WlsProblem = rates::WlsProblem<f64>;
pub type RateEstimate = rates::RateEstimate<f64>;
pub type TruncExpModel = rates::TruncExpModel<f64>;

pub type LoadDiffStats = sessions::LoadDiffStats<f64>;
pub type ChargeTimeModel = sessions::ChargeTimeModel<f64>;
pub type ChargingSession = sessions::ChargingSession<f64>;
pub type SessionPolicy = sessions::SessionPolicy<f64>;
pub type Method1Fleet = sessions::Method1Fleet<f64>;

pub type BaselineCurve = extract::BaselineCurve<f64>;
pub type ScaleParams = extract::ScaleParams<f64>;
pub type ChargingEvent = extract::ChargingEvent<f64>;
pub type SegmentationPolicy = extract::SegmentationPolicy<f64>;

pub type KdeModel = kde::KdeModel<f64>;

pub type TaperPolicy = scenario::TaperPolicy<f64>;
pub type PowerSegment = scenario::PowerSegment<f64>;
pub type ScenarioConfig = scenario::ScenarioConfig<f64>;
pub type SimulationSettings = scenario::SimulationSettings<f64>;
pub type FleetSimulation = scenario::FleetSimulation<f64>;
pub type FleetProfileSummary = scenario::FleetProfileSummary<f64>;
pub type CategorizedFleet = scenario::CategorizedFleet<f64>;

pub type SynthConfig = synth::SynthConfig<f64>;
pub type InjectedSession = synth::InjectedSession<f64>;
