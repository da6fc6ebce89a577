use std::env;
use std::path::PathBuf;

fn main() {
    let crate_dir = env::var("CARGO_MANIFEST_DIR").expect("manifest dir");
    let out = PathBuf::from(&crate_dir).join("include").join("tkga.h");
    println!("cargo:rerun-if-changed=src/lib.rs");
    println!("cargo:rerun-if-changed=cbindgen.toml");
    match cbindgen::generate(&crate_dir) {
        Ok(bindings) => {
            bindings.write_to_file(out);
        }
        // keep the previously generated header rather than failing the build
        Err(e) => println!("cargo:warning=cbindgen failed: {e}"),
    }
}
