/* jQuery-style stand-in v3.6.1 */
window.$ = function (sel) { return { html: function (s) { document.querySelector(sel).textContent = s; } }; };
