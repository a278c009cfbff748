use std::path::PathBuf;

fn main() {
    let dir = PathBuf::from(std::env::var("CARGO_MANIFEST_DIR").unwrap());
    println!("cargo:rerun-if-changed=src/lib.rs");
    println!("cargo:rerun-if-changed=cbindgen.toml");
    let config = cbindgen::Config::from_file(dir.join("cbindgen.toml")).expect("cbindgen.toml");
    let bindings = cbindgen::Builder::new()
        .with_crate(&dir)
        .with_config(config)
        .generate()
        .expect("header generation failed");
    let header = dir.join("include").join("lava.h");
    std::fs::create_dir_all(header.parent().unwrap()).unwrap();
    // Only touch the file when it changes so dependents don't rebuild.
    bindings.write_to_file(&header);
    let out = PathBuf::from(std::env::var("OUT_DIR").unwrap()).join("lava.h");
    bindings.write_to_file(out);
}
