fn main() {
    println!("cargo:rerun-if-env-changed=VAREMBED_LAPACK_LIB");
    if std::env::var_os("CARGO_FEATURE_LAPACK").is_some() {
        let lib = std::env::var("VAREMBED_LAPACK_LIB").unwrap_or_else(|_| "lapack".into());
        println!("cargo:rustc-link-lib={lib}");
    }
}
