fn main() {
    // The LAPACK bindings in the linear-algebra backend declare symbols only;
    // resolve them against the system OpenBLAS (which bundles LAPACK).
    println!("cargo:rustc-link-lib=dylib=openblas");
}
