pub mod annotation;
pub mod evidence;
pub mod exec;
pub mod export;
pub mod gateway;
mod http;
pub mod objective;
pub mod parser;
pub mod prompt;
pub mod store;
