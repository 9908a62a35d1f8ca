#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("placeholder")]
    Placeholder,
}
