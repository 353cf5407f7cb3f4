fn main() {
    // LAPACK/BLAS routines are provided by the system OpenBLAS build.
    println!("cargo:rustc-link-lib=dylib=openblas");
}
