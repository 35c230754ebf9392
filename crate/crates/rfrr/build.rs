fn main() {
    // All dense linear algebra goes through the system BLAS/LAPACK.
    println!("cargo:rustc-link-lib=dylib=openblas");
    println!("cargo:rustc-link-search=native=/usr/lib/x86_64-linux-gnu");
}
