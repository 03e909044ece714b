//! Deterministic synthetic Python corpora.
//!
//! Used by benchmarks, the throughput budget test, and the randomized
//! property suites. Everything is seeded, so two runs with the same seed
//! produce byte-identical sources.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use std::fmt::Write;
use std::path::Path;

/// Shape limits for a generated program.
#[derive(Debug, Clone, Copy)]
pub struct ProgramShape {
    pub max_functions: usize,
    pub max_statements_per_function: usize,
    pub max_params: usize,
    /// Allow if/while statements (the interprocedural oracle generator
    /// turns this off to keep programs straight-line).
    pub branching: bool,
}

impl Default for ProgramShape {
    fn default() -> Self {
        ProgramShape {
            max_functions: 4,
            max_statements_per_function: 6,
            max_params: 3,
            branching: true,
        }
    }
}

/// A random program under the given shape. Functions call each other by
/// bare name (possibly recursively), pass locals positionally, and return
/// one of their locals.
pub fn random_program(seed: u64, shape: ProgramShape) -> String {
    let mut rng = StdRng::seed_from_u64(seed);
    let function_count = rng.random_range(1..=shape.max_functions.max(1));
    let mut out = String::new();

    for f in 0..function_count {
        let params = rng.random_range(0..=shape.max_params);
        let names: Vec<String> = (0..params).map(|p| format!("p{p}")).collect();
        let _ = writeln!(out, "def f{f}({}):", names.join(", "));
        let mut locals: Vec<String> = names;
        let statements = rng.random_range(1..=shape.max_statements_per_function.max(1));
        let mut emitted = 0usize;
        emit_block(
            &mut out,
            &mut rng,
            &mut locals,
            function_count,
            statements,
            1,
            shape.branching,
            &mut emitted,
        );
        if locals.is_empty() || rng.random_range(0..4) == 0 {
            let _ = writeln!(out, "    return 0");
        } else {
            let v = &locals[rng.random_range(0..locals.len())];
            let _ = writeln!(out, "    return {v}");
        }
        let _ = writeln!(out);
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn emit_block(
    out: &mut String,
    rng: &mut StdRng,
    locals: &mut Vec<String>,
    function_count: usize,
    budget: usize,
    depth: usize,
    branching: bool,
    emitted: &mut usize,
) {
    let pad = "    ".repeat(depth);
    let mut wrote_any = false;
    for _ in 0..budget {
        *emitted += 1;
        let fresh = format!("v{}", *emitted);
        let choice = rng.random_range(0..10);
        match choice {
            0..=2 => {
                let _ = writeln!(out, "{pad}{fresh} = {}", rng.random_range(0..100));
                locals.push(fresh);
            }
            3..=4 if !locals.is_empty() => {
                let a = &locals[rng.random_range(0..locals.len())];
                let _ = writeln!(out, "{pad}{fresh} = {a}");
                locals.push(fresh);
            }
            5..=6 if locals.len() >= 2 => {
                let a = locals[rng.random_range(0..locals.len())].clone();
                let b = locals[rng.random_range(0..locals.len())].clone();
                let _ = writeln!(out, "{pad}{fresh} = {a} + {b}");
                locals.push(fresh);
            }
            7..=8 => {
                // Cross-function call with positional locals as arguments.
                let target = rng.random_range(0..function_count);
                let argc = rng.random_range(0..=locals.len().min(3));
                let args: Vec<String> = (0..argc)
                    .map(|_| locals[rng.random_range(0..locals.len())].clone())
                    .collect();
                let _ = writeln!(out, "{pad}{fresh} = f{target}({})", args.join(", "));
                locals.push(fresh);
            }
            _ if branching && depth < 3 && !locals.is_empty() => {
                let cond = &locals[rng.random_range(0..locals.len())].clone();
                let _ = writeln!(out, "{pad}if {cond}:");
                emit_block(
                    out,
                    rng,
                    locals,
                    function_count,
                    2,
                    depth + 1,
                    branching,
                    emitted,
                );
                if rng.random_range(0..2) == 0 {
                    let _ = writeln!(out, "{pad}else:");
                    emit_block(
                        out,
                        rng,
                        locals,
                        function_count,
                        2,
                        depth + 1,
                        branching,
                        emitted,
                    );
                }
            }
            _ => {
                let _ = writeln!(out, "{pad}{fresh} = {}", rng.random_range(0..100));
                locals.push(fresh);
            }
        }
        wrote_any = true;
    }
    if !wrote_any {
        let _ = writeln!(out, "{pad}pass");
    }
}

/// One file of a benchmark corpus: a realistic mix of plain helpers and
/// SDK-using functions, some compliant and some not.
pub fn corpus_file(seed: u64, functions: usize) -> String {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut out = String::from("import boto3\nimport time\n\n");
    for f in 0..functions {
        match rng.random_range(0..10) {
            0 => {
                let _ = writeln!(
                    out,
                    "def scan_all_{f}(db):\n    response = db.scan(TableName=\"t{f}\")\n    for item in response['Items']:\n        handle(item)\n"
                );
            }
            1 => {
                let _ = writeln!(
                    out,
                    "def scan_paged_{f}(db):\n    response = db.scan(TableName=\"t{f}\")\n    while \"LastEvaluatedKey\" in response:\n        response = db.scan(TableName=\"t{f}\", ExclusiveStartKey=response[\"LastEvaluatedKey\"])\n"
                );
            }
            2 => {
                let _ = writeln!(
                    out,
                    "def send_batch_{f}():\n    sqs = boto3.client('sqs')\n    sqs.send_message_batch()\n"
                );
            }
            3 => {
                let _ = writeln!(
                    out,
                    "def make_client_{f}():\n    return boto3.client(\"s3\")\n\ndef use_client_{f}():\n    c = make_client_{f}()\n    return c.list_objects(Bucket=\"b{f}\")\n"
                );
            }
            _ => {
                let body = random_program(
                    seed.wrapping_add(f as u64),
                    ProgramShape {
                        max_functions: 1,
                        max_statements_per_function: 5,
                        max_params: 2,
                        branching: true,
                    },
                );
                let renamed = body.replace("def f0(", &format!("def helper_{f}("));
                out.push_str(&renamed);
            }
        }
    }
    out
}

/// Write a corpus of roughly `total_functions` functions under `dir`,
/// returning the number of files written.
pub fn write_corpus(dir: &Path, total_functions: usize, seed: u64) -> std::io::Result<usize> {
    const FUNCTIONS_PER_FILE: usize = 20;
    let files = total_functions.div_ceil(FUNCTIONS_PER_FILE);
    std::fs::create_dir_all(dir)?;
    for i in 0..files {
        let content = corpus_file(seed.wrapping_add(i as u64), FUNCTIONS_PER_FILE);
        std::fs::write(dir.join(format!("mod_{i:05}.py")), content)?;
    }
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic() {
        let shape = ProgramShape::default();
        assert_eq!(random_program(42, shape), random_program(42, shape));
        assert_eq!(corpus_file(7, 10), corpus_file(7, 10));
    }

    #[test]
    fn generated_programs_parse_cleanly() {
        for seed in 0..50 {
            let src = random_program(seed, ProgramShape::default());
            let file = crate::frontend::SourceFile::new("gen.py", src.clone());
            let module = crate::frontend::parse_module(&file).unwrap();
            assert_eq!(
                crate::frontend::unknown_count(&module),
                0,
                "seed {seed}:\n{src}"
            );
        }
    }

    #[test]
    fn generated_graphs_validate() {
        for seed in 0..30 {
            let src = random_program(seed, ProgramShape::default());
            let file = crate::frontend::SourceFile::new("gen.py", src);
            let ast = crate::frontend::parse_module(&file).unwrap();
            let index = crate::mugraph::build_program(&[crate::mugraph::ParsedModule {
                source: file,
                ast,
                package: None,
            }]);
            for graph in index.graphs.values() {
                let violations = crate::mugraph::validate(graph);
                assert!(
                    violations.is_empty(),
                    "seed {seed} {}: {violations:?}",
                    graph.function_name
                );
            }
        }
    }
}
