use std::env;
use std::path::Path;

fn main() {
    let crate_dir = env::var("CARGO_MANIFEST_DIR").expect("cargo sets the manifest dir");
    let header_path = Path::new(&crate_dir).join("include").join("polyspec.h");
    let config =
        cbindgen::Config::from_root_or_default(Path::new(&crate_dir));
    cbindgen::Builder::new()
        .with_crate(&crate_dir)
        .with_config(config)
        .generate()
        .expect("the C header generates from the crate's public items")
        .write_to_file(header_path);
    println!("cargo:rerun-if-changed=src/lib.rs");
    println!("cargo:rerun-if-changed=cbindgen.toml");
}
