use spikemon::experiments::ExperimentError;
use spikemon::ingest::IngestError;
use spikemon::quantiles::QuantileError;
use spikemon::synth::SynthError;
use spikemon::{DetectorError, FormatError};

pub enum Outcome {
    Done,
    Alarm,
}

/// Invalid flag combination or value detected after parsing.
#[derive(Debug)]
pub struct Usage(pub String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

fn detector_code(e: &DetectorError) -> u8 {
    match e {
        DetectorError::DegenerateNormalizer => 4,
        DetectorError::InvalidThreshold(_) | DetectorError::TrainingTooShort(_) => 2,
        _ => 1,
    }
}

pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<Usage>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<DetectorError>() {
            return detector_code(e);
        }
        if let Some(e) = cause.downcast_ref::<ExperimentError>() {
            match e {
                ExperimentError::InvalidPlan(_) => return 2,
                ExperimentError::Detector(d) => return detector_code(d),
                _ => {}
            }
        }
        if let Some(QuantileError::InvalidRequest(_)) = cause.downcast_ref::<QuantileError>() {
            return 2;
        }
        if let Some(SynthError::InvalidSpec(_)) = cause.downcast_ref::<SynthError>() {
            return 2;
        }
        if let Some(IngestError::InvalidParameter(_) | IngestError::BaselineTooLong { .. }) =
            cause.downcast_ref::<IngestError>()
        {
            return 2;
        }
        if cause.is::<FormatError>() || cause.is::<std::io::Error>() {
            return 1;
        }
    }
    1
}
