pub mod gateway;
pub mod model;
pub mod prompt;
pub mod rag;
pub mod tools;
pub mod graph;
pub mod agent;
pub mod schema;
pub mod session;
pub mod knowledge;
pub mod checks;
pub mod design;
