#![no_main]

use libfuzzer_sys::fuzz_target;
use sentinel_core::corpus::Language;
use sentinel_core::lexer::tokenize;

fuzz_target!(|data: &[u8]| {
    let Ok(src) = std::str::from_utf8(data) else { return };
    for lang in [Language::Java, Language::Python, Language::C] {
        if let Ok(tokens) = tokenize(lang, src) {
            // Lossless: the tokens concatenate back to the input.
            let joined: String = tokens.iter().map(|t| t.text).collect();
            assert_eq!(joined, src);
        }
    }
});
