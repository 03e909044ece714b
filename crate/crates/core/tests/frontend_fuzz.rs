//! Robustness: parsing is total. Arbitrary input produces a module or a
//! located error, never a panic, including multibyte text in odd places.

use proptest::prelude::*;
use sdklint_core::frontend::{parse_module, SourceFile};

proptest! {
    #![proptest_config(ProptestConfig { cases: 2000, ..ProptestConfig::default() })]

    #[test]
    fn parser_never_panics(src in "[ -~\\n\\t\u{00e9}\u{4e16}]{0,200}") {
        let file = SourceFile::new("fuzz.py", src);
        let _ = parse_module(&file);
    }

    /// Python-shaped fragments: keywords, brackets, strings, continuations.
    #[test]
    fn parser_never_panics_on_pythonish_fragments(
        src in "(def |if |x = |    |\\(|\\)|:|\\n|'|\"|f'|1e|\\\\|,|\\*|lambda |try:|#c){0,40}"
    ) {
        let file = SourceFile::new("fuzz.py", src);
        let _ = parse_module(&file);
    }
}
