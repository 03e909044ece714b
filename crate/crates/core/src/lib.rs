//! Static analysis of Python code that uses cloud SDK clients.
//!
//! The pipeline parses Python sources, builds one MU graph per function
//! (a data-dependence graph overlaid on a control-flow graph), annotates
//! data nodes with client types from a built-in SDK knowledge base, and
//! evaluates best-practice rules through a node-set query engine with
//! interprocedural dataflow matching.

pub mod apispec;
pub mod frontend;
pub mod interproc;
pub mod mugraph;
pub mod query;
pub mod resolve;
pub mod rules;
pub mod stubtypes;
pub mod synth;

pub use apispec::{load_specs, SpecBundle};
pub use frontend::{parse_module, FrontendError, SourceFile};
pub use mugraph::{build_program, MuGraph, NodeId, ProgramIndex};
pub use resolve::{resolve_client, ClientResolution, ResolverConfig, ResolverMode};
pub use rules::{run_rules, Detection, RuleCtx};
pub use stubtypes::{annotate_program, ServiceCatalog};
