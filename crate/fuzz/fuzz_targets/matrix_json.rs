#![no_main]
use libfuzzer_sys::fuzz_target;
use tirs_core::harness::AblationMatrix;

fuzz_target!(|data: &str| {
    if let Ok(m) = AblationMatrix::from_json(data) {
        // cell expansion only; running them is far too slow here
        let n = m.variants.len() * m.objects.len() * m.inits.len() * m.displacements().len() * m.seeds.len();
        if n <= 10_000 {
            assert_eq!(m.cells().len(), n);
        }
    }
});
