pub mod corpus;
pub mod lexer;
pub mod prompt;
pub mod syntax;
pub mod verdict;
pub mod gateway;
pub mod oracle;
pub mod metamorph;
pub mod metrics;
pub mod runner;
