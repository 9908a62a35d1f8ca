#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("placeholder")]
    Placeholder,
}
