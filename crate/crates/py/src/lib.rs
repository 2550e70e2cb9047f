use pyo3::prelude::*;

#[pymodule]
fn statefold_py(_m: &Bound<'_, PyModule>) -> PyResult<()> {
    Ok(())
}
