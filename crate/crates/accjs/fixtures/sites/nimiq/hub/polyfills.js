/* stand-in for https://hub.nimiq.com/js/polyfills.js */
(function () { self.loaded = (self.loaded || []).concat("https://hub.nimiq.com/js/polyfills.js"); })();
