#[allow(unused_imports)]
pub(crate) use num_traits::Float;

pub(crate) use alloc::{format, string::String, sync::Arc, vec, vec::Vec};
