//! CSV reporting of estimator values.

/// One estimator evaluation: name, parameter string (free-form "k=v k=v"),
/// value, and the resolution it was computed at.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorRow {
    pub estimator: String,
    pub parameters: String,
    pub value: f64,
    pub resolution: String,
}

impl EstimatorRow {
    pub fn new(
        estimator: impl Into<String>,
        parameters: impl Into<String>,
        value: f64,
        resolution: impl Into<String>,
    ) -> Self {
        Self {
            estimator: estimator.into(),
            parameters: parameters.into(),
            value,
            resolution: resolution.into(),
        }
    }
}

/// Write rows as CSV with a header (estimator, parameters, value, resolution).
pub fn write_estimator_csv<W: std::io::Write>(
    writer: W,
    rows: &[EstimatorRow],
) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["estimator", "parameters", "value", "resolution"])?;
    for r in rows {
        w.write_record(&[
            r.estimator.clone(),
            r.parameters.clone(),
            format!("{:.17e}", r.value),
            r.resolution.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
